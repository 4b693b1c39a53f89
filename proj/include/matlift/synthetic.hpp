#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "matlift/instruction.hpp"
#include "matlift/rng.hpp"
#include "matlift/task_catalog.hpp"

namespace matlift {

// Auxiliary-corpus variants used to decompose multi-task gains:
//   syn1 keeps inputs and fabricates values, syn2 fabricates both,
//   syn3 fabricates inputs and keeps values.
enum class SynVariant { RealGeneral, RealSpecialized, Syn1, Syn2, Syn3 };

std::string syn_variant_name(SynVariant v);
SynVariant syn_variant_from_name(const std::string& name);

struct AuxTask {
    std::string code;
    TaskKind kind = TaskKind::Regression;
    std::vector<TabularRecord> rows;
};

struct SynResult {
    std::vector<AuxTask> tasks;
    std::vector<std::string> warnings;
};

// Fabricated-code shape shared by syn2/syn3.
inline constexpr size_t kSynCodeMinLen = 3;
inline constexpr size_t kSynCodeMaxLen = 10;
bool is_syn_code(const std::string& s);  // ^[A-Z]{3,10}$

// Values replaced by uniform draws on each task's own [min, max], formatted
// to that task's modal decimal-place count; inputs untouched.
SynResult make_syn1(const std::vector<AuxTask>& aux, RngStream& rng);

// Inputs replaced by globally unique uppercase codes disjoint from
// `real_inputs`; values fabricated as in syn1.
SynResult make_syn2(const std::vector<AuxTask>& aux, const std::set<std::string>& real_inputs,
                    RngStream& rng);

// Inputs replaced by codes, values kept exactly (same string, same position).
SynResult make_syn3(const std::vector<AuxTask>& aux, const std::set<std::string>& real_inputs,
                    RngStream& rng);

struct AblationSeriesSpec {
    std::string target_task;
    std::vector<std::string> auxiliary_tasks;
    SynVariant variant = SynVariant::RealGeneral;
    bool volume_match = false;
    size_t reference_count = 0;  // total auxiliary records kept when volume_match
    uint64_t seed = 0;
};

// Target corpus plus auxiliary corpora concatenated and shuffled; when
// volume_match, the concatenated auxiliaries are first uniformly subsampled
// to reference_count.
std::vector<InstructionRecord> assemble_series(
    const std::vector<InstructionRecord>& target,
    const std::vector<std::vector<InstructionRecord>>& aux_corpora,
    const AblationSeriesSpec& spec);

// Modal count of digits after the decimal point; ties resolve to the
// smallest count.
int modal_decimal_places(const std::vector<TabularRecord>& rows);

std::string format_fixed(double value, int decimals);

}  // namespace matlift
