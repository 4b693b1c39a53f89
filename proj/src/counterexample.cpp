#include "matlift/counterexample.hpp"

#include <algorithm>
#include <cmath>

#include "matlift/errors.hpp"

namespace matlift {

const std::vector<std::string>& builtin_word_list() {
    static const std::vector<std::string> words = {
        "anchor",   "apple",    "balloon",  "basket",   "bicycle",  "bridge",   "butter",
        "candle",   "canyon",   "carpet",   "castle",   "cheese",   "cherry",   "circus",
        "cloud",    "coffee",   "compass",  "cousin",   "cricket",  "curtain",  "dancer",
        "desert",   "dinner",   "doctor",   "dolphin",  "donkey",   "dragon",   "drawer",
        "farmer",   "feather",  "fiddle",   "finger",   "forest",   "fountain", "garden",
        "garlic",   "guitar",   "hammer",   "harbor",   "helmet",   "hunter",   "island",
        "jacket",   "jungle",   "kettle",   "kitchen",  "kitten",   "ladder",   "lantern",
        "lawyer",   "lemon",    "letter",   "library",  "lobster",  "marble",   "market",
        "meadow",   "mirror",   "monkey",   "morning",  "mountain", "museum",   "mustard",
        "needle",   "ocean",    "orange",   "orchard",  "oyster",   "paddle",   "painter",
        "pancake",  "parrot",   "pencil",   "pepper",   "piano",    "picture",  "pillow",
        "pirate",   "planet",   "pocket",   "poster",   "potato",   "puzzle",   "rabbit",
        "ribbon",   "river",    "rocket",   "saddle",   "sailor",   "sandal",   "scissors",
        "shadow",   "shepherd", "shovel",   "singer",   "sister",   "soccer",   "spider",
        "spinach",  "squirrel", "stable",   "station",  "summer",   "sunset",   "teacher",
        "temple",   "thunder",  "ticket",   "tiger",    "tunnel",   "turtle",   "umbrella",
        "valley",   "velvet",   "village",  "violin",   "wagon",    "walnut",   "window",
        "winter",   "wizard",   "zebra",
    };
    return words;
}

const std::string& default_refusal_prefix() {
    static const std::string prefix = "The given input is not a valid";
    return prefix;
}

std::string refusal_text(const TaskSpec& task, const CounterexamplePolicy& policy) {
    return substitute_placeholders(policy.refusal_template,
                                   {{"material_type", task.material_type},
                                    {"property", task.property}});
}

CounterexampleForge::CounterexampleForge(const TaskSpec& task, CounterexamplePolicy policy,
                                         const TemplateRegistry& registry)
    : task_(task), policy_(std::move(policy)), registry_(registry), rng_(policy_.seed) {
    if (!(policy_.ratio >= 0.0 && policy_.ratio < 1.0))
        throw ConfigError("counterexample ratio must be in [0, 1)");
    unused_words_ = policy_.words.empty() ? builtin_word_list() : policy_.words;
    rng_.shuffle(unused_words_);
}

std::vector<std::string> CounterexampleForge::draw_inputs(size_t n,
                                                          const std::set<std::string>& avoid) {
    std::vector<std::string> out;
    out.reserve(n);
    size_t rejected = 0;
    const size_t max_rejections = 10000 + 100 * n;
    // Alternate word / random-string draws so the pool stays half common
    // words, half seeded letter strings.
    while (out.size() < n) {
        const bool want_random =
            policy_.random_strings && (out.size() % 2 == 1 || unused_words_.empty());
        std::string candidate;
        if (want_random) {
            const size_t len = 4 + static_cast<size_t>(rng_.uniform_u64(9));  // 4..12
            candidate.reserve(len);
            for (size_t i = 0; i < len; ++i)
                candidate += static_cast<char>('a' + rng_.uniform_u64(26));
        } else {
            if (unused_words_.empty())
                throw DataError("counterexample pool exhausted: word list consumed after " +
                                std::to_string(used_.size()) + " draws and random strings are "
                                "disabled");
            candidate = unused_words_.back();
            unused_words_.pop_back();
        }
        if (avoid.count(candidate) || used_.count(candidate)) {
            if (++rejected > max_rejections)
                throw DataError("counterexample pool exhausted: could not draw " +
                                std::to_string(n) + " inputs disjoint from real inputs");
            continue;
        }
        used_.insert(candidate);
        out.push_back(std::move(candidate));
    }
    return out;
}

std::vector<InstructionRecord> CounterexampleForge::generate(
    size_t n, const std::set<std::string>& real_inputs) {
    const std::string refusal = refusal_text(task_, policy_);
    const std::vector<std::string> inputs = draw_inputs(n, real_inputs);

    std::vector<InstructionRecord> out;
    out.reserve(n);
    for (const auto& input : inputs) {
        const Template& tmpl = select_template(task_, registry_, rng_);
        std::map<std::string, std::string> values = {
            {"material_type", task_.material_type},
            {"material_representation", input},
            {"property", task_.property},
        };
        if (!task_.has_phrase.empty()) values["has_"] = task_.has_phrase;
        InstructionRecord rec;
        rec.instruction = substitute_placeholders(tmpl.instruction_pattern, values);
        rec.input = substitute_placeholders(tmpl.input_pattern, values);
        rec.output = refusal;
        rec.meta.task = task_.code;
        rec.meta.template_id = tmpl.id;
        rec.meta.origin = Origin::Counterexample;
        rec.meta.seed = policy_.seed;
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<InstructionRecord> CounterexampleForge::inject(
    const std::vector<InstructionRecord>& corpus) {
    for (const auto& r : corpus) {
        if (r.meta.origin != Origin::Real)
            throw ConfigError("inject expects a corpus of real records only");
        if (r.meta.task != task_.code)
            throw ConfigError("inject: corpus record for task '" + r.meta.task +
                              "' does not match forge task '" + task_.code + "'");
    }
    const size_t n = corpus.size();
    const size_t k = static_cast<size_t>(std::llround(policy_.ratio * static_cast<double>(n)));

    std::set<std::string> avoid;
    for (const auto& r : corpus) avoid.insert(r.input);
    std::vector<InstructionRecord> counters = generate(k, avoid);

    std::vector<InstructionRecord> out = corpus;
    if (policy_.append) {
        out.insert(out.end(), counters.begin(), counters.end());
    } else {
        const std::vector<size_t> replace = rng_.sample_indices(n, k);
        for (size_t i = 0; i < k; ++i) out[replace[i]] = std::move(counters[i]);
    }
    rng_.shuffle(out);
    return out;
}

std::vector<InstructionRecord> CounterexampleForge::build_testset(
    size_t m, const std::set<std::string>& real_inputs) {
    return generate(m, real_inputs);
}

}  // namespace matlift
