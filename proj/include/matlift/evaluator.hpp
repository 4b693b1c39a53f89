#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "matlift/task_catalog.hpp"

namespace matlift {

enum class OutcomeKind { Label, Numeric, Refusal, Unparseable };

struct ParsedOutcome {
    OutcomeKind kind = OutcomeKind::Unparseable;
    std::optional<int> label_index;
    std::optional<double> value;
    std::string matched_span;
};

// Total over arbitrary model output: refusal prefix first, then label
// matching (classification) or first maximal decimal number (regression).
ParsedOutcome parse_prediction(const TaskSpec& task, const std::string& raw,
                               const std::string& refusal_prefix);

// Unweighted mean of per-class F1 over classes present in golds. Unparseable
// predictions (nullopt) count as wrong for every gold class. A class with
// zero precision+recall scores 0.
double macro_f1(const std::vector<std::optional<int>>& preds, const std::vector<int>& golds);

struct MaePolicy {
    enum class OnUnparseable { Exclude, Penalize } mode = OnUnparseable::Exclude;
    double penalty = 0.0;  // |pred - gold| charged per unparseable under Penalize
};

struct MaeResult {
    double value = 0.0;
    size_t n_used = 0;
    size_t n_unparseable = 0;
};

MaeResult mae(const std::vector<std::optional<double>>& preds, const std::vector<double>& golds,
              const MaePolicy& policy = {});

struct MadRmse {
    double mad = 0.0;
    double rmse = 0.0;
    size_t n = 0;  // non-missing pairs
};

// Both statistics over non-missing pairs only (missing = nullopt prediction).
MadRmse mad_rmse(const std::vector<std::optional<double>>& preds,
                 const std::vector<double>& exps);

// Signed percent 100*(pred - exp)/exp; throws on exp == 0.
double pct_deviation(double pred, double exp);

// Half-up rounding at a decimal precision: floor(x*10^d + 0.5)/10^d.
double round_half_up(double x, int decimals);

// Table presentation: one decimal when |value| < 10, integer otherwise.
std::string format_pct(double pct);
std::string format_pct(double pct, int decimals);

struct CounterexampleRates {
    double rejection_rate = 0.0;
    double hallucination_rate = 0.0;
    size_t n = 0;
};

CounterexampleRates counterexample_rates(const std::vector<ParsedOutcome>& outcomes);

// Regression (lower better): (reference - model)/reference.
// Classification (higher better): (model - reference)/reference.
// -1 means 100% worse than the reference.
double performance_ratio(double model_metric, double reference_metric, TaskKind kind);

// ---------------------------------------------------------------------------
// Report assembly

struct TaskMetricRow {
    std::string task;
    std::string metric;  // "macro_f1" or "mae"
    double value = 0.0;
    size_t n_evaluated = 0;
    size_t n_unparseable = 0;
};

struct ComparisonEntry {
    std::string composition;
    std::string method;
    std::optional<double> predicted;  // nullopt renders as N/A
    double experimental = 0.0;
    std::optional<double> pct;        // raw signed percent
    std::string pct_text;             // table-precision rendering
};

struct MethodSummary {
    std::string method;
    double mad = 0.0;
    double rmse = 0.0;
    size_t n = 0;
};

struct CounterexampleRow {
    std::string task;
    double rejection_rate = 0.0;
    double hallucination_rate = 0.0;
    size_t n = 0;
    // Paired normal-test metric so both evaluation stages sit in one report.
    std::string normal_metric;
    std::optional<double> normal_value;
};

struct BaselineComparison {
    std::string task;
    std::string method;
    double baseline = 0.0;
    double model = 0.0;
    double ratio = 0.0;  // performance_ratio(model, baseline, kind)
};

struct MetricsReport {
    std::vector<TaskMetricRow> task_rows;
    std::vector<ComparisonEntry> comparison;
    std::vector<MethodSummary> summaries;
    std::vector<CounterexampleRow> counterexamples;
    std::vector<BaselineComparison> baseline_rows;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
    std::string render_text() const;
};

// Per-composition predictions for several methods against one experimental
// column; missing cells are nullopt.
struct ComparisonInput {
    std::vector<std::string> compositions;
    std::vector<double> experimental;
    std::vector<std::pair<std::string, std::vector<std::optional<double>>>> methods;
};

MetricsReport build_report(const std::vector<TaskMetricRow>& task_rows,
                           const ComparisonInput* comparison,
                           const std::vector<CounterexampleRow>& counterexamples,
                           const TaskCatalog* catalog);

// Wide CSV: composition,experimental,<method>... with N/A (or empty) for
// missing cells.
ComparisonInput read_comparison_csv(const std::filesystem::path& path);

}  // namespace matlift
