#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "matlift/instruction.hpp"

namespace matlift {

struct CorpusHeader {
    int schema_version = 1;
    uint64_t seed = 0;
    std::string manifest_hash;
};

struct Corpus {
    CorpusHeader header;
    std::vector<InstructionRecord> records;

    size_t size() const { return records.size(); }
};

struct SplitResult {
    Corpus train;
    Corpus test;
    std::vector<std::string> warnings;
};

// Disjoint, exhaustive partition with |test| = round(test_fraction * N).
// Classification corpora (records carrying meta.label) are stratified by
// label; impossible stratification falls back to unstratified with a warning.
SplitResult split(const Corpus& corpus, double test_fraction, uint64_t seed);

struct DedupResult {
    Corpus corpus;
    size_t removed = 0;
    std::vector<std::string> conflicts;  // same key, different output; first kept
};

using KeyCanonicalizer = std::function<std::string(const std::string&)>;

// One record per distinct canonical input key, first occurrence wins.
// Default canonicalizer is exact string match on the input field.
DedupResult merge_dedup(const std::vector<Corpus>& corpora, KeyCanonicalizer key = {});

// Concatenation of all records, globally shuffled under seed.
Corpus mix_multitask(const std::vector<Corpus>& corpora, uint64_t seed);

// Line-oriented serialization: one {"instruction","input","output"} object per
// line, plus a ".meta" sidecar whose first line is the corpus header and whose
// following lines carry per-record provenance in corpus order.
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct ReadResult {
    Corpus corpus;
    std::vector<std::string> warnings;
};

ReadResult read_corpus(const std::filesystem::path& path);

}  // namespace matlift
