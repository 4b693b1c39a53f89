#pragma once

#include <cstdint>
#include <string>

namespace matlift {

enum class Origin { Real, Counterexample, Syn1, Syn2, Syn3, Qa, Unknown };

std::string origin_name(Origin o);
Origin origin_from_name(const std::string& name);

// Provenance. Kept beside each record, never inside the serialized
// instruction/input/output text.
struct RecordMeta {
    std::string task;         // task code, empty for task-free records
    std::string template_id;  // empty when no template was involved
    Origin origin = Origin::Unknown;
    uint64_t seed = 0;            // seed of the stage that produced the record
    std::string source_dataset;
    std::string source_row;       // opaque row key
    std::string label;            // gold label for classification records
};

// The three-element schema plus provenance.
struct InstructionRecord {
    std::string instruction;
    std::string input;
    std::string output;
    RecordMeta meta;
};

inline std::string origin_name(Origin o) {
    switch (o) {
        case Origin::Real: return "real";
        case Origin::Counterexample: return "counterexample";
        case Origin::Syn1: return "syn1";
        case Origin::Syn2: return "syn2";
        case Origin::Syn3: return "syn3";
        case Origin::Qa: return "qa";
        case Origin::Unknown: break;
    }
    return "unknown";
}

inline Origin origin_from_name(const std::string& name) {
    if (name == "real") return Origin::Real;
    if (name == "counterexample") return Origin::Counterexample;
    if (name == "syn1") return Origin::Syn1;
    if (name == "syn2") return Origin::Syn2;
    if (name == "syn3") return Origin::Syn3;
    if (name == "qa") return Origin::Qa;
    return Origin::Unknown;
}

}  // namespace matlift
