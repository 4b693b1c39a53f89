#include "matlift/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "matlift/errors.hpp"
#include "matlift/text.hpp"

namespace matlift {

std::string syn_variant_name(SynVariant v) {
    switch (v) {
        case SynVariant::RealGeneral: return "real_general";
        case SynVariant::RealSpecialized: return "real_specialized";
        case SynVariant::Syn1: return "syn1";
        case SynVariant::Syn2: return "syn2";
        case SynVariant::Syn3: return "syn3";
    }
    return "real_general";
}

SynVariant syn_variant_from_name(const std::string& name) {
    if (name == "real_general") return SynVariant::RealGeneral;
    if (name == "real_specialized") return SynVariant::RealSpecialized;
    if (name == "syn1") return SynVariant::Syn1;
    if (name == "syn2") return SynVariant::Syn2;
    if (name == "syn3") return SynVariant::Syn3;
    throw ConfigError("unknown synthetic variant '" + name + "'");
}

bool is_syn_code(const std::string& s) {
    if (s.size() < kSynCodeMinLen || s.size() > kSynCodeMaxLen) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= 'A' && c <= 'Z'; });
}

int modal_decimal_places(const std::vector<TabularRecord>& rows) {
    std::map<int, size_t> counts;
    for (const auto& r : rows) {
        const size_t dot = r.target.find('.');
        int places = 0;
        if (dot != std::string::npos) {
            for (size_t i = dot + 1; i < r.target.size() &&
                                     std::isdigit(static_cast<unsigned char>(r.target[i]));
                 ++i)
                ++places;
        }
        ++counts[places];
    }
    int best = 0;
    size_t best_count = 0;
    for (const auto& [places, count] : counts) {
        if (count > best_count) {
            best = places;
            best_count = count;
        }
    }
    return best;
}

std::string format_fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    return buf;
}

namespace {

struct ValueRange {
    double lo = 0.0;
    double hi = 0.0;
    int decimals = 0;
};

ValueRange task_range(const AuxTask& task, std::vector<std::string>* warnings) {
    if (task.kind != TaskKind::Regression)
        throw ConfigError("synthetic variants require regression auxiliary tasks; '" +
                          task.code + "' is classification");
    if (task.rows.empty())
        throw ConfigError("auxiliary task '" + task.code + "' has no rows");
    ValueRange range;
    range.lo = std::numeric_limits<double>::infinity();
    range.hi = -std::numeric_limits<double>::infinity();
    for (const auto& r : task.rows) {
        const auto v = parse_decimal(r.target);
        if (!v)
            throw DataError("auxiliary task '" + task.code + "': target '" + r.target +
                            "' is not numeric");
        range.lo = std::min(range.lo, *v);
        range.hi = std::max(range.hi, *v);
    }
    if (range.lo == range.hi && warnings)
        warnings->push_back("task '" + task.code +
                            "': all values equal; fabricated values are the constant " +
                            task.rows.front().target);
    range.decimals = modal_decimal_places(task.rows);
    return range;
}

std::string fabricate_value(const ValueRange& range, RngStream& rng) {
    return format_fixed(rng.uniform_real(range.lo, range.hi), range.decimals);
}

// Uppercase codes, globally unique per generator, disjoint from a fixed set.
class CodeGenerator {
public:
    CodeGenerator(const std::set<std::string>& avoid, RngStream& rng)
        : avoid_(avoid), rng_(rng) {}

    std::string next() {
        size_t rejected = 0;
        for (;;) {
            const size_t len =
                kSynCodeMinLen + static_cast<size_t>(
                                     rng_.uniform_u64(kSynCodeMaxLen - kSynCodeMinLen + 1));
            std::string code;
            code.reserve(len);
            for (size_t i = 0; i < len; ++i)
                code += static_cast<char>('A' + rng_.uniform_u64(26));
            if (!avoid_.count(code) && issued_.insert(code).second) return code;
            if (++rejected > 100000)
                throw DataError("synthetic code space exhausted");
        }
    }

private:
    const std::set<std::string>& avoid_;
    RngStream& rng_;
    std::set<std::string> issued_;
};

}  // namespace

SynResult make_syn1(const std::vector<AuxTask>& aux, RngStream& rng) {
    SynResult result;
    for (const auto& task : aux) {
        const ValueRange range = task_range(task, &result.warnings);
        AuxTask out = task;
        for (auto& row : out.rows) {
            row.target = fabricate_value(range, rng);
            row.label_index.reset();
        }
        result.tasks.push_back(std::move(out));
    }
    return result;
}

SynResult make_syn2(const std::vector<AuxTask>& aux, const std::set<std::string>& real_inputs,
                    RngStream& rng) {
    SynResult result;
    CodeGenerator codes(real_inputs, rng);
    for (const auto& task : aux) {
        const ValueRange range = task_range(task, &result.warnings);
        AuxTask out = task;
        for (auto& row : out.rows) {
            row.input_repr = codes.next();
            row.target = fabricate_value(range, rng);
            row.label_index.reset();
        }
        result.tasks.push_back(std::move(out));
    }
    return result;
}

SynResult make_syn3(const std::vector<AuxTask>& aux, const std::set<std::string>& real_inputs,
                    RngStream& rng) {
    SynResult result;
    CodeGenerator codes(real_inputs, rng);
    for (const auto& task : aux) {
        task_range(task, nullptr);  // validates kind and numeric targets
        AuxTask out = task;
        for (auto& row : out.rows) row.input_repr = codes.next();
        result.tasks.push_back(std::move(out));
    }
    return result;
}

std::vector<InstructionRecord> assemble_series(
    const std::vector<InstructionRecord>& target,
    const std::vector<std::vector<InstructionRecord>>& aux_corpora,
    const AblationSeriesSpec& spec) {
    RngStream rng(spec.seed);

    std::vector<InstructionRecord> aux;
    for (const auto& corpus : aux_corpora) aux.insert(aux.end(), corpus.begin(), corpus.end());

    if (spec.volume_match) {
        if (aux.size() < spec.reference_count)
            throw ConfigError("volume match: auxiliaries hold " + std::to_string(aux.size()) +
                              " records, fewer than the reference count " +
                              std::to_string(spec.reference_count));
        const std::vector<size_t> keep = rng.sample_indices(aux.size(), spec.reference_count);
        std::vector<InstructionRecord> sampled;
        sampled.reserve(keep.size());
        for (size_t i : keep) sampled.push_back(std::move(aux[i]));
        aux = std::move(sampled);
    }

    std::vector<InstructionRecord> out = target;
    out.insert(out.end(), aux.begin(), aux.end());
    rng.shuffle(out);
    return out;
}

}  // namespace matlift
