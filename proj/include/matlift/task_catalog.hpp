#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace matlift {

enum class TaskKind { Classification, Regression };

std::string task_kind_name(TaskKind k);

// Column mapping for one source dataset of a task. Either a single input
// column or a composite format string with {column} references.
struct SourceBinding {
    std::string dataset;
    std::string input_column;   // used when input_format is empty
    std::string input_format;   // e.g. "composition: {composition}, temperature (K):{temperature}"
    std::string target_column;

    std::vector<std::string> required_columns() const;

    bool operator==(const SourceBinding&) const = default;
};

struct TaskSpec {
    std::string code;                      // C1..C5, R1..R17, or user-defined
    TaskKind kind = TaskKind::Regression;
    std::string material_type;             // e.g. "composition", "SMILES"
    std::string property;                  // e.g. "band gap", "yield strength"
    std::string has_phrase;                // classification verb form, e.g. "is a", "has"
    std::string has_phrase_negative;       // e.g. "is not a", "does not have"
    std::vector<std::string> label_vocab;  // ordered; empty for regression
    std::string value_units;               // metadata only, never rendered
    std::vector<std::string> template_ids;
    std::vector<SourceBinding> sources;

    bool operator==(const TaskSpec&) const = default;
};

struct BaselineRow {
    std::string task;
    std::string method;
    double value = 0.0;

    bool operator==(const BaselineRow&) const = default;
};

// Missing entries are absences; there is no row for a (task, method) without
// a published result.
struct BaselineTable {
    std::vector<BaselineRow> rows;

    std::optional<double> find(const std::string& task, const std::string& method) const;
    std::vector<BaselineRow> for_task(const std::string& task) const;

    bool operator==(const BaselineTable&) const = default;
};

// One ingested source row. Regression targets keep the file's decimal string
// untouched; classification targets resolve to a label index.
struct TabularRecord {
    std::string input_repr;
    std::string target;               // original string, byte-preserved
    std::optional<int> label_index;   // set for classification
    std::string source_dataset;
    std::string source_row;

    bool operator==(const TabularRecord&) const = default;
};

class TaskCatalog {
public:
    // Loads and validates a manifest file. Template-id existence is checked
    // separately by load_manifest() in template_engine.hpp, which knows the
    // registry.
    static TaskCatalog load(const std::filesystem::path& manifest_path);

    const TaskSpec& lookup(const std::string& code) const;
    bool contains(const std::string& code) const;
    const std::vector<TaskSpec>& tasks() const { return tasks_; }
    const BaselineTable& baselines() const { return baselines_; }

    // FNV-1a of the manifest bytes, as recorded in corpus headers.
    const std::string& manifest_hash() const { return manifest_hash_; }
    const std::filesystem::path& path() const { return path_; }

    // All input representations across a set of ingested row files; used for
    // disjointness checks by the counterexample and synthetic generators.
    bool operator==(const TaskCatalog& other) const {
        return tasks_ == other.tasks_ && baselines_ == other.baselines_;
    }

private:
    std::vector<TaskSpec> tasks_;
    std::map<std::string, size_t> index_;
    BaselineTable baselines_;
    std::string manifest_hash_;
    std::filesystem::path path_;
};

// Ingests a delimited file for a task. The source binding is chosen by
// matching the file's header against the task's declared mappings, or forced
// with `dataset`. Row order and numeric strings are preserved.
std::vector<TabularRecord> ingest_rows(const TaskCatalog& catalog, const std::string& code,
                                       const std::filesystem::path& csv_path,
                                       const std::string& dataset = "");

// Lossless re-serialization: columns input,target (+ provenance columns).
void write_records_csv(const std::vector<TabularRecord>& records,
                       const std::filesystem::path& path);
std::vector<TabularRecord> read_records_csv(const std::filesystem::path& path,
                                            const TaskSpec& task);

std::string fnv1a_hex(std::string_view bytes);

}  // namespace matlift
