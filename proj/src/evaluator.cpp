#include "matlift/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "matlift/csv.hpp"
#include "matlift/errors.hpp"
#include "matlift/text.hpp"

namespace matlift {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Earliest case-insensitive occurrence of `needle` in `text` that is not
// flanked by alphanumeric characters, so "No" does not fire inside "Nothing".
std::optional<size_t> find_label(const std::string& text, const std::string& needle) {
    size_t from = 0;
    while (from < text.size()) {
        const size_t pos = find_ci(text, needle, from);
        if (pos == std::string::npos) return std::nullopt;
        const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
        const size_t end = pos + needle.size();
        const bool right_ok = end >= text.size() || !is_word_char(text[end]);
        if (left_ok && right_ok) return pos;
        from = pos + 1;
    }
    return std::nullopt;
}

}  // namespace

ParsedOutcome parse_prediction(const TaskSpec& task, const std::string& raw,
                               const std::string& refusal_prefix) {
    ParsedOutcome outcome;
    const std::string text = trim(raw);

    if (!refusal_prefix.empty() && starts_with(text, refusal_prefix)) {
        outcome.kind = OutcomeKind::Refusal;
        outcome.matched_span = refusal_prefix;
        return outcome;
    }

    if (task.kind == TaskKind::Classification) {
        std::optional<size_t> best_pos;
        int best_label = -1;
        size_t best_len = 0;
        for (size_t i = 0; i < task.label_vocab.size(); ++i) {
            const auto pos = find_label(text, task.label_vocab[i]);
            if (!pos) continue;
            const size_t len = task.label_vocab[i].size();
            if (!best_pos || *pos < *best_pos || (*pos == *best_pos && len > best_len)) {
                best_pos = pos;
                best_label = static_cast<int>(i);
                best_len = len;
            }
        }
        if (best_pos) {
            outcome.kind = OutcomeKind::Label;
            outcome.label_index = best_label;
            outcome.matched_span = text.substr(*best_pos, best_len);
        }
        return outcome;
    }

    if (const auto num = find_first_number(text)) {
        outcome.kind = OutcomeKind::Numeric;
        outcome.value = num->value;
        outcome.matched_span = text.substr(num->pos, num->len);
    }
    return outcome;
}

double macro_f1(const std::vector<std::optional<int>>& preds, const std::vector<int>& golds) {
    if (golds.empty()) throw ConfigError("macro_f1: empty inputs");
    if (preds.size() != golds.size())
        throw ConfigError("macro_f1: prediction/gold size mismatch");

    std::set<int> classes(golds.begin(), golds.end());
    double sum = 0.0;
    for (int c : classes) {
        size_t tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < golds.size(); ++i) {
            const bool gold_c = golds[i] == c;
            const bool pred_c = preds[i].has_value() && *preds[i] == c;
            if (gold_c && pred_c) ++tp;
            else if (!gold_c && pred_c) ++fp;
            else if (gold_c && !pred_c) ++fn;
        }
        const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
        const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
        sum += precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    }
    return sum / static_cast<double>(classes.size());
}

MaeResult mae(const std::vector<std::optional<double>>& preds, const std::vector<double>& golds,
              const MaePolicy& policy) {
    if (golds.empty()) throw ConfigError("mae: empty inputs");
    if (preds.size() != golds.size()) throw ConfigError("mae: prediction/gold size mismatch");

    MaeResult result;
    double sum = 0.0;
    for (size_t i = 0; i < golds.size(); ++i) {
        if (preds[i]) {
            sum += std::abs(*preds[i] - golds[i]);
            ++result.n_used;
        } else {
            ++result.n_unparseable;
            if (policy.mode == MaePolicy::OnUnparseable::Penalize) {
                sum += policy.penalty;
                ++result.n_used;
            }
        }
    }
    if (result.n_used == 0) throw DataError("mae: no parseable prediction/gold pairs");
    result.value = sum / static_cast<double>(result.n_used);
    return result;
}

MadRmse mad_rmse(const std::vector<std::optional<double>>& preds,
                 const std::vector<double>& exps) {
    if (preds.size() != exps.size()) throw ConfigError("mad_rmse: size mismatch");
    MadRmse result;
    double abs_sum = 0.0, sq_sum = 0.0;
    for (size_t i = 0; i < exps.size(); ++i) {
        if (!preds[i]) continue;
        const double d = *preds[i] - exps[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
        ++result.n;
    }
    if (result.n == 0) throw DataError("mad_rmse: all prediction cells missing");
    result.mad = abs_sum / static_cast<double>(result.n);
    result.rmse = std::sqrt(sq_sum / static_cast<double>(result.n));
    return result;
}

double pct_deviation(double pred, double exp) {
    if (exp == 0.0) throw DataError("pct_deviation: undefined for experimental value 0");
    return 100.0 * (pred - exp) / exp;
}

double round_half_up(double x, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::floor(x * scale + 0.5) / scale;
}

std::string format_pct(double pct, int decimals) {
    const double rounded = round_half_up(pct, decimals);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, rounded + 0.0);  // +0.0 kills -0
    return buf;
}

std::string format_pct(double pct) { return format_pct(pct, std::abs(pct) < 10.0 ? 1 : 0); }

CounterexampleRates counterexample_rates(const std::vector<ParsedOutcome>& outcomes) {
    if (outcomes.empty()) throw ConfigError("counterexample_rates: empty test set");
    size_t refusals = 0;
    for (const auto& o : outcomes)
        if (o.kind == OutcomeKind::Refusal) ++refusals;
    CounterexampleRates r;
    r.n = outcomes.size();
    r.rejection_rate = static_cast<double>(refusals) / static_cast<double>(outcomes.size());
    r.hallucination_rate = 1.0 - r.rejection_rate;
    return r;
}

double performance_ratio(double model_metric, double reference_metric, TaskKind kind) {
    if (reference_metric <= 0.0)
        throw ConfigError("performance_ratio: reference metric must be positive");
    if (kind == TaskKind::Regression)
        return (reference_metric - model_metric) / reference_metric;
    return (model_metric - reference_metric) / reference_metric;
}

// ---------------------------------------------------------------------------

MetricsReport build_report(const std::vector<TaskMetricRow>& task_rows,
                           const ComparisonInput* comparison,
                           const std::vector<CounterexampleRow>& counterexamples,
                           const TaskCatalog* catalog) {
    MetricsReport report;
    report.task_rows = task_rows;
    report.counterexamples = counterexamples;

    if (comparison) {
        const size_t n = comparison->compositions.size();
        if (comparison->experimental.size() != n)
            throw ConfigError("comparison: experimental column length mismatch");
        for (const auto& [method, column] : comparison->methods) {
            if (column.size() != n)
                throw ConfigError("comparison: column '" + method + "' length mismatch");
            for (size_t i = 0; i < n; ++i) {
                ComparisonEntry entry;
                entry.composition = comparison->compositions[i];
                entry.method = method;
                entry.predicted = column[i];
                entry.experimental = comparison->experimental[i];
                if (column[i] && comparison->experimental[i] != 0.0) {
                    entry.pct = pct_deviation(*column[i], comparison->experimental[i]);
                    entry.pct_text = format_pct(*entry.pct);
                }
                report.comparison.push_back(std::move(entry));
            }
            const MadRmse stats = mad_rmse(column, comparison->experimental);
            report.summaries.push_back({method, stats.mad, stats.rmse, stats.n});
        }
    }

    if (catalog) {
        for (const auto& row : task_rows) {
            if (!catalog->contains(row.task)) continue;
            const TaskSpec& task = catalog->lookup(row.task);
            for (const auto& b : catalog->baselines().for_task(row.task)) {
                BaselineComparison cmp;
                cmp.task = row.task;
                cmp.method = b.method;
                cmp.baseline = b.value;
                cmp.model = row.value;
                cmp.ratio = performance_ratio(row.value, b.value, task.kind);
                report.baseline_rows.push_back(std::move(cmp));
            }
        }
    }
    return report;
}

namespace {

ordered_json opt_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

std::optional<double> opt_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace

std::string MetricsReport::to_json() const {
    ordered_json doc;
    doc["task_rows"] = ordered_json::array();
    for (const auto& r : task_rows)
        doc["task_rows"].push_back({{"task", r.task},
                                    {"metric", r.metric},
                                    {"value", r.value},
                                    {"n_evaluated", r.n_evaluated},
                                    {"n_unparseable", r.n_unparseable}});
    doc["comparison"] = ordered_json::array();
    for (const auto& c : comparison)
        doc["comparison"].push_back({{"composition", c.composition},
                                     {"method", c.method},
                                     {"predicted", opt_to_json(c.predicted)},
                                     {"experimental", c.experimental},
                                     {"pct", opt_to_json(c.pct)},
                                     {"pct_text", c.pct_text}});
    doc["summaries"] = ordered_json::array();
    for (const auto& s : summaries)
        doc["summaries"].push_back(
            {{"method", s.method}, {"mad", s.mad}, {"rmse", s.rmse}, {"n", s.n}});
    doc["counterexamples"] = ordered_json::array();
    for (const auto& c : counterexamples) {
        ordered_json j = {{"task", c.task},
                          {"rejection_rate", c.rejection_rate},
                          {"hallucination_rate", c.hallucination_rate},
                          {"n", c.n},
                          {"normal_metric", c.normal_metric},
                          {"normal_value", opt_to_json(c.normal_value)}};
        doc["counterexamples"].push_back(std::move(j));
    }
    doc["baseline_rows"] = ordered_json::array();
    for (const auto& b : baseline_rows)
        doc["baseline_rows"].push_back({{"task", b.task},
                                        {"method", b.method},
                                        {"baseline", b.baseline},
                                        {"model", b.model},
                                        {"ratio", b.ratio}});
    return doc.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("report: ") + e.what());
    }
    MetricsReport report;
    for (const auto& r : doc.value("task_rows", json::array()))
        report.task_rows.push_back({r.at("task"), r.at("metric"), r.at("value"),
                                    r.at("n_evaluated"), r.at("n_unparseable")});
    for (const auto& c : doc.value("comparison", json::array())) {
        ComparisonEntry e;
        e.composition = c.at("composition");
        e.method = c.at("method");
        e.predicted = opt_from_json(c.at("predicted"));
        e.experimental = c.at("experimental");
        e.pct = opt_from_json(c.at("pct"));
        e.pct_text = c.at("pct_text");
        report.comparison.push_back(std::move(e));
    }
    for (const auto& s : doc.value("summaries", json::array()))
        report.summaries.push_back({s.at("method"), s.at("mad"), s.at("rmse"), s.at("n")});
    for (const auto& c : doc.value("counterexamples", json::array())) {
        CounterexampleRow row;
        row.task = c.at("task");
        row.rejection_rate = c.at("rejection_rate");
        row.hallucination_rate = c.at("hallucination_rate");
        row.n = c.at("n");
        row.normal_metric = c.value("normal_metric", "");
        row.normal_value = opt_from_json(c.at("normal_value"));
        report.counterexamples.push_back(std::move(row));
    }
    for (const auto& b : doc.value("baseline_rows", json::array()))
        report.baseline_rows.push_back(
            {b.at("task"), b.at("method"), b.at("baseline"), b.at("model"), b.at("ratio")});
    return report;
}

std::string MetricsReport::render_text() const {
    std::ostringstream out;
    if (!task_rows.empty()) {
        out << "Per-task metrics\n";
        for (const auto& r : task_rows) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "  %-6s %-10s %12.6g  n=%zu  unparseable=%zu\n",
                          r.task.c_str(), r.metric.c_str(), r.value, r.n_evaluated,
                          r.n_unparseable);
            out << buf;
        }
    }
    if (!comparison.empty()) {
        out << "Bandgap comparison (eV)\n";
        std::string current;
        for (const auto& c : comparison) {
            if (c.method != current) {
                current = c.method;
                out << "  method " << current << "\n";
            }
            char buf[200];
            if (c.predicted)
                std::snprintf(buf, sizeof(buf), "    %-12s pred=%-8g exp=%-8g (%s%%)\n",
                              c.composition.c_str(), *c.predicted, c.experimental,
                              c.pct_text.c_str());
            else
                std::snprintf(buf, sizeof(buf), "    %-12s pred=N/A      exp=%-8g\n",
                              c.composition.c_str(), c.experimental);
            out << buf;
        }
    }
    if (!summaries.empty()) {
        out << "Method summaries\n";
        for (const auto& s : summaries) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "  %-8s MAD=%.6g RMSE=%.6g n=%zu\n",
                          s.method.c_str(), s.mad, s.rmse, s.n);
            out << buf;
        }
    }
    if (!counterexamples.empty()) {
        out << "Counterexample evaluation\n";
        for (const auto& c : counterexamples) {
            char buf[200];
            std::snprintf(buf, sizeof(buf),
                          "  %-6s rejection=%.4f hallucination=%.4f n=%zu", c.task.c_str(),
                          c.rejection_rate, c.hallucination_rate, c.n);
            out << buf;
            if (c.normal_value) {
                std::snprintf(buf, sizeof(buf), "  normal %s=%.6g", c.normal_metric.c_str(),
                              *c.normal_value);
                out << buf;
            }
            out << "\n";
        }
    }
    if (!baseline_rows.empty()) {
        out << "Baseline comparison\n";
        for (const auto& b : baseline_rows) {
            char buf[200];
            std::snprintf(buf, sizeof(buf),
                          "  %-6s vs %-24s baseline=%.6g model=%.6g ratio=%+.4f\n",
                          b.task.c_str(), b.method.c_str(), b.baseline, b.model, b.ratio);
            out << buf;
        }
    }
    return out.str();
}

ComparisonInput read_comparison_csv(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    const size_t comp_col = table.column("composition");
    const size_t exp_col = table.column("experimental");

    ComparisonInput input;
    std::vector<size_t> method_cols;
    for (size_t i = 0; i < table.header.size(); ++i) {
        if (i == comp_col || i == exp_col) continue;
        method_cols.push_back(i);
        input.methods.push_back({table.header[i], {}});
    }
    for (size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        input.compositions.push_back(row[comp_col]);
        const auto exp = parse_decimal(row[exp_col]);
        if (!exp)
            throw DataError(path.string() + ": row " + std::to_string(r + 2) +
                            ": experimental value '" + row[exp_col] + "' is not numeric");
        input.experimental.push_back(*exp);
        for (size_t m = 0; m < method_cols.size(); ++m) {
            const std::string& cell = row[method_cols[m]];
            if (cell.empty() || cell == "N/A" || cell == "NA" || cell == "n/a") {
                input.methods[m].second.push_back(std::nullopt);
            } else {
                const auto v = parse_decimal(cell);
                if (!v)
                    throw DataError(path.string() + ": row " + std::to_string(r + 2) +
                                    ": cell '" + cell + "' is not numeric");
                input.methods[m].second.push_back(*v);
            }
        }
    }
    return input;
}

}  // namespace matlift
