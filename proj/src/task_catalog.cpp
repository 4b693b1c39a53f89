#include "matlift/task_catalog.hpp"

#include <algorithm>
#include <cstdio>

#include <json.hpp>

#include "matlift/csv.hpp"
#include "matlift/errors.hpp"
#include "matlift/text.hpp"

namespace matlift {

using nlohmann::json;

std::string task_kind_name(TaskKind k) {
    return k == TaskKind::Classification ? "classification" : "regression";
}

std::vector<std::string> SourceBinding::required_columns() const {
    std::vector<std::string> cols;
    if (input_format.empty()) {
        cols.push_back(input_column);
    } else {
        size_t pos = 0;
        while ((pos = input_format.find('{', pos)) != std::string::npos) {
            const size_t end = input_format.find('}', pos);
            if (end == std::string::npos) break;
            cols.push_back(input_format.substr(pos + 1, end - pos - 1));
            pos = end + 1;
        }
    }
    cols.push_back(target_column);
    return cols;
}

std::optional<double> BaselineTable::find(const std::string& task,
                                          const std::string& method) const {
    for (const auto& r : rows)
        if (r.task == task && r.method == method) return r.value;
    return std::nullopt;
}

std::vector<BaselineRow> BaselineTable::for_task(const std::string& task) const {
    std::vector<BaselineRow> out;
    for (const auto& r : rows)
        if (r.task == task) out.push_back(r);
    return out;
}

std::string fnv1a_hex(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

std::string require_string(const json& obj, const char* field, const std::string& where) {
    if (!obj.contains(field) || !obj[field].is_string())
        throw DataError("manifest: " + where + ": missing or non-string field '" + field + "'");
    return obj[field].get<std::string>();
}

SourceBinding parse_source(const json& s, const std::string& where) {
    SourceBinding b;
    b.dataset = require_string(s, "dataset", where);
    if (s.contains("input_format"))
        b.input_format = require_string(s, "input_format", where);
    else
        b.input_column = require_string(s, "input", where);
    b.target_column = require_string(s, "target", where);
    return b;
}

TaskSpec parse_task(const json& t, size_t index) {
    const std::string where = "tasks[" + std::to_string(index) + "]";
    TaskSpec spec;
    spec.code = require_string(t, "code", where);
    const std::string kind = require_string(t, "kind", where);
    if (kind == "classification")
        spec.kind = TaskKind::Classification;
    else if (kind == "regression")
        spec.kind = TaskKind::Regression;
    else
        throw DataError("manifest: " + where + ": unknown kind '" + kind + "'");
    spec.material_type = require_string(t, "material_type", where);
    spec.property = require_string(t, "property", where);
    if (t.contains("has_phrase")) spec.has_phrase = t["has_phrase"].get<std::string>();
    if (t.contains("has_phrase_negative"))
        spec.has_phrase_negative = t["has_phrase_negative"].get<std::string>();
    if (t.contains("label_vocab"))
        for (const auto& l : t["label_vocab"]) spec.label_vocab.push_back(l.get<std::string>());
    if (t.contains("units")) spec.value_units = t["units"].get<std::string>();
    if (!t.contains("templates") || !t["templates"].is_array() || t["templates"].empty())
        throw DataError("manifest: " + where + " (" + spec.code +
                        "): field 'templates' must be a non-empty array");
    for (const auto& id : t["templates"]) spec.template_ids.push_back(id.get<std::string>());
    if (t.contains("sources"))
        for (const auto& s : t["sources"])
            spec.sources.push_back(parse_source(s, where + " (" + spec.code + ")"));

    if (spec.kind == TaskKind::Classification) {
        if (spec.label_vocab.empty())
            throw DataError("manifest: classification task '" + spec.code +
                            "' lacks label_vocab");
        if (!spec.value_units.empty())
            throw DataError("manifest: classification task '" + spec.code +
                            "' must not declare units");
    } else if (!spec.label_vocab.empty()) {
        throw DataError("manifest: regression task '" + spec.code +
                        "' must have empty label_vocab");
    }
    return spec;
}

}  // namespace

TaskCatalog TaskCatalog::load(const std::filesystem::path& manifest_path) {
    const std::string bytes = read_text_file(manifest_path);
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw DataError("manifest: " + manifest_path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("tasks") || !doc["tasks"].is_array())
        throw DataError("manifest: top-level object with a 'tasks' array required");

    TaskCatalog catalog;
    catalog.manifest_hash_ = fnv1a_hex(bytes);
    catalog.path_ = manifest_path;

    size_t i = 0;
    for (const auto& t : doc["tasks"]) {
        TaskSpec spec = parse_task(t, i++);
        if (catalog.index_.count(spec.code))
            throw DataError("manifest: duplicate task code '" + spec.code + "'");
        catalog.index_[spec.code] = catalog.tasks_.size();
        catalog.tasks_.push_back(std::move(spec));
    }

    if (doc.contains("baselines")) {
        for (const auto& b : doc["baselines"]) {
            BaselineRow row;
            row.task = require_string(b, "task", "baselines");
            row.method = require_string(b, "method", "baselines");
            if (!b.contains("value") || !b["value"].is_number())
                throw DataError("manifest: baselines: missing numeric 'value' for " + row.task);
            row.value = b["value"].get<double>();
            if (!catalog.index_.count(row.task))
                throw DataError("manifest: baseline row references unknown task '" + row.task +
                                "'");
            catalog.baselines_.rows.push_back(std::move(row));
        }
    }
    return catalog;
}

bool TaskCatalog::contains(const std::string& code) const { return index_.count(code) != 0; }

const TaskSpec& TaskCatalog::lookup(const std::string& code) const {
    const auto it = index_.find(code);
    if (it == index_.end()) throw DataError("unknown task code '" + code + "'");
    return tasks_[it->second];
}

namespace {

std::string render_input(const SourceBinding& binding, const CsvTable& table,
                         const std::vector<std::string>& row) {
    if (binding.input_format.empty()) return row[table.column(binding.input_column)];
    std::string out;
    const std::string& fmt = binding.input_format;
    size_t pos = 0;
    while (pos < fmt.size()) {
        const size_t open = fmt.find('{', pos);
        if (open == std::string::npos) {
            out += fmt.substr(pos);
            break;
        }
        out += fmt.substr(pos, open - pos);
        const size_t close = fmt.find('}', open);
        if (close == std::string::npos) throw DataError("source binding: unterminated '{' in input_format");
        out += row[table.column(fmt.substr(open + 1, close - open - 1))];
        pos = close + 1;
    }
    return out;
}

const SourceBinding& choose_binding(const TaskSpec& task, const CsvTable& table,
                                    const std::string& dataset) {
    if (!dataset.empty()) {
        for (const auto& b : task.sources)
            if (b.dataset == dataset) return b;
        throw ConfigError("task " + task.code + " has no source dataset '" + dataset + "'");
    }
    for (const auto& b : task.sources) {
        bool all = true;
        for (const auto& col : b.required_columns())
            if (!table.has_column(col)) {
                all = false;
                break;
            }
        if (all) return b;
    }
    throw DataError("task " + task.code +
                    ": file header matches no declared source column mapping");
}

}  // namespace

std::vector<TabularRecord> ingest_rows(const TaskCatalog& catalog, const std::string& code,
                                       const std::filesystem::path& csv_path,
                                       const std::string& dataset) {
    const TaskSpec& task = catalog.lookup(code);
    if (task.sources.empty())
        throw ConfigError("task " + code + " declares no source datasets");
    const CsvTable table = read_csv(csv_path);
    const SourceBinding& binding = choose_binding(task, table, dataset);
    const size_t target_col = table.column(binding.target_column);

    std::vector<TabularRecord> records;
    records.reserve(table.rows.size());
    for (size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const std::string at = code + " row " + std::to_string(i + 1);
        TabularRecord rec;
        rec.input_repr = render_input(binding, table, row);
        if (rec.input_repr.empty()) throw DataError(at + ": empty input representation");
        rec.target = row[target_col];
        if (task.kind == TaskKind::Regression) {
            if (!parse_decimal(rec.target))
                throw DataError(at + ": target '" + rec.target +
                                "' is not a finite decimal number");
        } else {
            const auto it = std::find(task.label_vocab.begin(), task.label_vocab.end(),
                                      rec.target);
            if (it == task.label_vocab.end())
                throw DataError(at + ": label '" + rec.target + "' not in label vocabulary");
            rec.label_index = static_cast<int>(it - task.label_vocab.begin());
        }
        rec.source_dataset = binding.dataset;
        rec.source_row = std::to_string(i + 1);
        records.push_back(std::move(rec));
    }
    return records;
}

void write_records_csv(const std::vector<TabularRecord>& records,
                       const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(records.size());
    for (const auto& r : records)
        rows.push_back({r.input_repr, r.target, r.source_dataset, r.source_row});
    write_csv(path, {"input", "target", "source_dataset", "source_row"}, rows);
}

std::vector<TabularRecord> read_records_csv(const std::filesystem::path& path,
                                            const TaskSpec& task) {
    const CsvTable table = read_csv(path);
    const size_t input_col = table.column("input");
    const size_t target_col = table.column("target");
    const bool has_prov = table.has_column("source_dataset") && table.has_column("source_row");

    std::vector<TabularRecord> records;
    records.reserve(table.rows.size());
    for (size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        TabularRecord rec;
        rec.input_repr = row[input_col];
        rec.target = row[target_col];
        if (task.kind == TaskKind::Classification) {
            const auto it = std::find(task.label_vocab.begin(), task.label_vocab.end(),
                                      rec.target);
            if (it == task.label_vocab.end())
                throw DataError(task.code + " row " + std::to_string(i + 1) + ": label '" +
                                rec.target + "' not in label vocabulary");
            rec.label_index = static_cast<int>(it - task.label_vocab.begin());
        } else if (!parse_decimal(rec.target)) {
            throw DataError(task.code + " row " + std::to_string(i + 1) + ": target '" +
                            rec.target + "' is not a finite decimal number");
        }
        if (has_prov) {
            rec.source_dataset = row[table.column("source_dataset")];
            rec.source_row = row[table.column("source_row")];
        } else {
            rec.source_row = std::to_string(i + 1);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace matlift
