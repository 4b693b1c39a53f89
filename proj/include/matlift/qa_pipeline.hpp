#pragma once

#include <string>
#include <vector>

#include "matlift/instruction.hpp"
#include "matlift/rng.hpp"

namespace matlift {

struct GenerationPrompt {
    std::string paper_text;
    std::string rendered;
};

// The embedded prompt body; "{text}" marks the substitution site.
const std::string& generation_prompt_template();

// Byte-exact template rendering with the paper text substituted at {text}.
GenerationPrompt build_prompt(const std::string& paper_text);

struct QAPair {
    int index = 0;  // 1..10
    std::string question;
    std::string answer;
    std::vector<std::string> keywords;  // shared per-source list
    std::string source_id;
};

struct QaParse {
    std::vector<std::string> keywords;
    std::vector<QAPair> pairs;
    std::vector<std::string> warnings;
};

// Total over arbitrary text: returns whatever complete (Qi, Ai) couples and
// keywords it can find, with structural warnings. Throws DataError only when
// neither a keywords line nor any complete pair exists.
QaParse parse_generator_output(const std::string& text, const std::string& source_id = "");

struct FilterResult {
    std::vector<QAPair> kept;
    size_t removed = 0;
};

// Drops pairs whose question or answer contains "this paper" or "this study"
// (case-insensitive, exact phrases); survivor order preserved.
FilterResult filter_self_referential(const std::vector<QAPair>& pairs);

// instruction = question, input = "", output = answer, origin = qa.
std::vector<InstructionRecord> qa_to_instructions(const std::vector<QAPair>& pairs);

struct MixResult {
    std::vector<InstructionRecord> records;
    std::vector<std::string> warnings;
};

// General records subsampled to the science count when larger, then
// concatenated and shuffled.
MixResult mix_with_general(const std::vector<InstructionRecord>& science,
                           const std::vector<InstructionRecord>& general, RngStream& rng);

}  // namespace matlift
