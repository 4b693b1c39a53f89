#include "matlift/dataset_ops.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "matlift/csv.hpp"
#include "matlift/errors.hpp"
#include "matlift/rng.hpp"

namespace matlift {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

Corpus take_indices(const Corpus& corpus, const std::vector<size_t>& indices, uint64_t seed) {
    Corpus out;
    out.header = corpus.header;
    out.header.seed = seed;
    out.records.reserve(indices.size());
    for (size_t i : indices) out.records.push_back(corpus.records[i]);
    return out;
}

}  // namespace

SplitResult split(const Corpus& corpus, double test_fraction, uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("test fraction must be in (0, 1)");
    const size_t n = corpus.size();
    const size_t n_test = static_cast<size_t>(std::llround(test_fraction * static_cast<double>(n)));
    if (n_test == 0) throw ConfigError("test fraction rounds to zero test items");
    if (n_test >= n) throw ConfigError("test fraction rounds to an empty train split");

    SplitResult result;
    RngStream rng(seed);

    // Group positions by label; records without a label all land in one group.
    std::map<std::string, std::vector<size_t>> by_label;
    for (size_t i = 0; i < n; ++i) by_label[corpus.records[i].meta.label].push_back(i);

    bool stratify = by_label.size() > 1 && !by_label.count("");
    if (stratify) {
        for (const auto& [label, positions] : by_label) {
            if (test_fraction * static_cast<double>(positions.size()) < 1.0) {
                result.warnings.push_back("stratification impossible: class '" + label +
                                          "' yields under one test item; splitting unstratified");
                stratify = false;
                break;
            }
        }
    }

    std::vector<size_t> test_positions;
    if (stratify) {
        // Largest-remainder allocation so class counts sum to n_test exactly.
        struct Alloc {
            const std::vector<size_t>* positions;
            size_t base;
            double remainder;
        };
        std::vector<Alloc> allocs;
        size_t assigned = 0;
        for (const auto& [label, positions] : by_label) {
            const double ideal = test_fraction * static_cast<double>(positions.size());
            const size_t base = static_cast<size_t>(std::floor(ideal));
            allocs.push_back({&positions, base, ideal - std::floor(ideal)});
            assigned += base;
        }
        std::vector<size_t> order(allocs.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return allocs[a].remainder > allocs[b].remainder;
        });
        for (size_t k = 0; assigned < n_test; ++k) {
            ++allocs[order[k % order.size()]].base;
            ++assigned;
        }
        for (const auto& a : allocs) {
            const auto chosen = rng.sample_indices(a.positions->size(), std::min(a.base, a.positions->size()));
            for (size_t c : chosen) test_positions.push_back((*a.positions)[c]);
        }
        std::sort(test_positions.begin(), test_positions.end());
    } else {
        test_positions = rng.sample_indices(n, n_test);
    }

    std::vector<char> is_test(n, 0);
    for (size_t i : test_positions) is_test[i] = 1;
    std::vector<size_t> train_positions;
    train_positions.reserve(n - test_positions.size());
    for (size_t i = 0; i < n; ++i)
        if (!is_test[i]) train_positions.push_back(i);

    result.train = take_indices(corpus, train_positions, seed);
    result.test = take_indices(corpus, test_positions, seed);
    return result;
}

DedupResult merge_dedup(const std::vector<Corpus>& corpora, KeyCanonicalizer key) {
    if (corpora.empty()) throw ConfigError("merge_dedup: no corpora given");
    std::string task_code;
    for (const auto& c : corpora)
        for (const auto& r : c.records) {
            if (task_code.empty()) task_code = r.meta.task;
            if (r.meta.task != task_code)
                throw ConfigError("merge_dedup: corpora mix task codes '" + task_code +
                                  "' and '" + r.meta.task + "'");
        }

    DedupResult result;
    result.corpus.header = corpora.front().header;
    std::map<std::string, size_t> seen;  // canonical key -> index in output
    for (const auto& c : corpora) {
        for (const auto& r : c.records) {
            const std::string k = key ? key(r.input) : r.input;
            const auto it = seen.find(k);
            if (it == seen.end()) {
                seen[k] = result.corpus.records.size();
                result.corpus.records.push_back(r);
            } else {
                ++result.removed;
                if (result.corpus.records[it->second].output != r.output)
                    result.conflicts.push_back("key '" + k + "': conflicting targets, kept first");
            }
        }
    }
    return result;
}

Corpus mix_multitask(const std::vector<Corpus>& corpora, uint64_t seed) {
    Corpus out;
    out.header.seed = seed;
    std::set<std::string> provenance;
    for (const auto& c : corpora) {
        if (out.header.manifest_hash.empty()) out.header.manifest_hash = c.header.manifest_hash;
        for (const auto& r : c.records) {
            if (!r.meta.source_row.empty()) {
                const std::string key =
                    r.meta.task + "\x1f" + r.meta.source_dataset + "\x1f" + r.meta.source_row;
                if (!provenance.insert(key).second)
                    throw DataError("mix_multitask: duplicate provenance for task " + r.meta.task +
                                    " row " + r.meta.source_row);
            }
            out.records.push_back(r);
        }
    }
    RngStream rng(seed);
    rng.shuffle(out.records);
    return out;
}

namespace {

ordered_json record_to_json(const InstructionRecord& r) {
    ordered_json j;
    j["instruction"] = r.instruction;
    j["input"] = r.input;
    j["output"] = r.output;
    return j;
}

ordered_json meta_to_json(const RecordMeta& m) {
    ordered_json j;
    j["task"] = m.task;
    j["template"] = m.template_id;
    j["origin"] = origin_name(m.origin);
    j["seed"] = m.seed;
    if (!m.source_dataset.empty()) j["source_dataset"] = m.source_dataset;
    if (!m.source_row.empty()) j["source_row"] = m.source_row;
    if (!m.label.empty()) j["label"] = m.label;
    return j;
}

RecordMeta meta_from_json(const json& j) {
    RecordMeta m;
    m.task = j.value("task", "");
    m.template_id = j.value("template", "");
    m.origin = origin_from_name(j.value("origin", "unknown"));
    m.seed = j.value("seed", uint64_t{0});
    m.source_dataset = j.value("source_dataset", "");
    m.source_row = j.value("source_row", "");
    m.label = j.value("label", "");
    return m;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ostringstream body;
    std::ostringstream meta;
    ordered_json header;
    header["schema_version"] = corpus.header.schema_version;
    header["seed"] = corpus.header.seed;
    header["manifest_hash"] = corpus.header.manifest_hash;
    meta << header.dump() << '\n';
    for (const auto& r : corpus.records) {
        body << record_to_json(r).dump() << '\n';
        meta << meta_to_json(r.meta).dump() << '\n';
    }
    write_text_file(path, body.str());
    write_text_file(std::filesystem::path(path.string() + ".meta"), meta.str());
}

ReadResult read_corpus(const std::filesystem::path& path) {
    ReadResult result;
    const std::string body = read_text_file(path);

    size_t line_no = 0;
    size_t start = 0;
    while (start < body.size()) {
        size_t nl = body.find('\n', start);
        const bool truncated = nl == std::string::npos;
        const std::string_view line(body.data() + start, (truncated ? body.size() : nl) - start);
        start = truncated ? body.size() : nl + 1;
        ++line_no;
        if (line.empty()) continue;
        if (truncated)
            throw DataError(path.string() + ": line " + std::to_string(line_no) +
                            ": truncated final line (missing newline)");
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("instruction") || !j.contains("input") ||
            !j.contains("output"))
            throw DataError(path.string() + ": line " + std::to_string(line_no) +
                            ": record object must have instruction/input/output");
        InstructionRecord r;
        r.instruction = j["instruction"].get<std::string>();
        r.input = j["input"].get<std::string>();
        r.output = j["output"].get<std::string>();
        result.corpus.records.push_back(std::move(r));
    }

    const std::filesystem::path meta_path(path.string() + ".meta");
    if (!std::filesystem::exists(meta_path)) {
        result.warnings.push_back("metadata sidecar missing: " + meta_path.string() +
                                  "; records loaded with origin=unknown");
        return result;
    }

    const std::string meta_text = read_text_file(meta_path);
    std::vector<std::string> lines;
    size_t pos = 0;
    while (pos < meta_text.size()) {
        size_t nl = meta_text.find('\n', pos);
        if (nl == std::string::npos) nl = meta_text.size();
        if (nl > pos) lines.emplace_back(meta_text.substr(pos, nl - pos));
        pos = nl + 1;
    }

    size_t first_record_line = 0;
    if (!lines.empty()) {
        json h;
        try {
            h = json::parse(lines[0]);
        } catch (const json::parse_error& e) {
            throw DataError(meta_path.string() + ": line 1: " + e.what());
        }
        if (h.contains("schema_version")) {
            const int version = h["schema_version"].get<int>();
            if (version != result.corpus.header.schema_version)
                throw DataError(meta_path.string() + ": schema version " +
                                std::to_string(version) + " unsupported");
            result.corpus.header.seed = h.value("seed", uint64_t{0});
            result.corpus.header.manifest_hash = h.value("manifest_hash", "");
            first_record_line = 1;
        }
    }
    const size_t meta_count = lines.size() - first_record_line;
    if (meta_count != result.corpus.records.size()) {
        result.warnings.push_back("metadata sidecar has " + std::to_string(meta_count) +
                                  " entries for " + std::to_string(result.corpus.records.size()) +
                                  " records; provenance ignored");
        return result;
    }
    for (size_t i = 0; i < meta_count; ++i) {
        json j;
        try {
            j = json::parse(lines[first_record_line + i]);
        } catch (const json::parse_error& e) {
            throw DataError(meta_path.string() + ": line " +
                            std::to_string(first_record_line + i + 1) + ": " + e.what());
        }
        result.corpus.records[i].meta = meta_from_json(j);
    }
    return result;
}

}  // namespace matlift
