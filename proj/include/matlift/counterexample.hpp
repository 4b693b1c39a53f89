#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "matlift/instruction.hpp"
#include "matlift/rng.hpp"
#include "matlift/task_catalog.hpp"
#include "matlift/template_engine.hpp"

namespace matlift {

// Nonsense inputs paired with refusal outputs, mixed into training corpora so
// a fine-tuned model learns to reject invalid inputs instead of predicting.
struct CounterexamplePolicy {
    double ratio = 0.05;                 // fraction of the final training set, in [0, 1)
    std::string refusal_template =
        "The given input is not a valid <material_type>, so its <property> cannot be "
        "determined.";
    uint64_t seed = 0;
    std::vector<std::string> words;      // empty selects the built-in list
    bool random_strings = true;          // also draw seeded letter strings (length 4-12)
    bool append = false;                 // append instead of replacing real records
};

const std::vector<std::string>& builtin_word_list();

// Detection prefix shared with the evaluator; the default refusal template
// starts with this for every task.
const std::string& default_refusal_prefix();

// Resolved refusal sentence for one task.
std::string refusal_text(const TaskSpec& task, const CounterexamplePolicy& policy);

// One forge per (task, policy) run. Draws are tracked across calls so the
// training injection and the held-out counterexample test set stay disjoint.
class CounterexampleForge {
public:
    CounterexampleForge(const TaskSpec& task, CounterexamplePolicy policy,
                        const TemplateRegistry& registry);

    // n counterexample records whose inputs avoid `real_inputs` and all
    // previous draws from this forge.
    std::vector<InstructionRecord> generate(size_t n, const std::set<std::string>& real_inputs);

    // Same-size corpus with round(ratio*N) real records replaced by
    // counterexamples (or appended when policy.append), then shuffled.
    std::vector<InstructionRecord> inject(const std::vector<InstructionRecord>& corpus);

    // m counterexamples disjoint from everything drawn so far (default 100).
    std::vector<InstructionRecord> build_testset(size_t m,
                                                 const std::set<std::string>& real_inputs);

    size_t draws_made() const { return used_.size(); }

private:
    std::vector<std::string> draw_inputs(size_t n, const std::set<std::string>& avoid);

    TaskSpec task_;
    CounterexamplePolicy policy_;
    const TemplateRegistry& registry_;
    RngStream rng_;
    std::vector<std::string> unused_words_;
    std::set<std::string> used_;
};

}  // namespace matlift
