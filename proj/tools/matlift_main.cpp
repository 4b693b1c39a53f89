// matlift: compile tabular materials datasets into instruction corpora and
// evaluate text-completion endpoints on them.
//
// Exit codes: 0 success, 1 internal error, 2 usage/config error,
// 3 environment/credentials error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "matlift/counterexample.hpp"
#include "matlift/csv.hpp"
#include "matlift/dataset_ops.hpp"
#include "matlift/errors.hpp"
#include "matlift/evaluator.hpp"
#include "matlift/inference_client.hpp"
#include "matlift/qa_pipeline.hpp"
#include "matlift/synthetic.hpp"
#include "matlift/task_catalog.hpp"
#include "matlift/template_engine.hpp"
#include "matlift/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace matlift;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kDefaultApiKeyEnv = "MATLIFT_API_KEY";

void write_stage_manifest(const fs::path& main_output, ordered_json stage) {
    stage["tool_version"] = kVersion;
    write_text_file(fs::path(main_output.string() + ".stage.json"), stage.dump(2) + "\n");
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

double parse_fraction(const std::string& text) {
    const size_t slash = text.find('/');
    if (slash != std::string::npos) {
        const auto num = parse_decimal(text.substr(0, slash));
        const auto den = parse_decimal(text.substr(slash + 1));
        if (!num || !den || *den == 0.0) throw ConfigError("bad fraction '" + text + "'");
        return *num / *den;
    }
    const auto v = parse_decimal(text);
    if (!v) throw ConfigError("bad fraction '" + text + "'");
    return *v;
}

// ---------------------------------------------------------------------------
// Run configuration file. Values present in the file override flags.

struct RunConfig {
    std::optional<std::string> manifest;
    std::vector<std::string> tasks;
    std::map<std::string, uint64_t> seeds;
    std::optional<double> split_fraction;
    std::optional<double> counterexample_ratio;
    std::optional<std::string> refusal_text;
    std::optional<std::string> pool_file;
    std::optional<bool> append;
    std::optional<std::string> preset;
    std::optional<std::string> endpoint;
    std::optional<std::string> model;
    std::optional<int> parallelism;
    std::optional<int> max_tokens;
    std::optional<std::string> protocol;
    std::optional<std::string> api_key_env;
    std::optional<std::string> output_dir;
};

RunConfig load_run_config(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("run config: " + path.string() + ": " + e.what());
    }
    static const std::set<std::string> known = {
        "manifest",  "tasks",    "seeds",       "split_fraction", "counterexample_ratio",
        "refusal_text", "pool_file", "append",  "preset",         "endpoint",
        "model",     "parallelism", "max_tokens", "protocol",     "api_key_env",
        "output_dir"};
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (!known.count(key)) throw ConfigError("run config: unknown key '" + key + "'");
    }
    RunConfig cfg;
    if (doc.contains("manifest")) cfg.manifest = doc["manifest"].get<std::string>();
    if (doc.contains("tasks"))
        for (const auto& t : doc["tasks"]) cfg.tasks.push_back(t.get<std::string>());
    if (doc.contains("seeds"))
        for (const auto& [stage, seed] : doc["seeds"].items())
            cfg.seeds[stage] = seed.get<uint64_t>();
    if (doc.contains("split_fraction")) cfg.split_fraction = doc["split_fraction"].get<double>();
    if (doc.contains("counterexample_ratio"))
        cfg.counterexample_ratio = doc["counterexample_ratio"].get<double>();
    if (doc.contains("refusal_text")) cfg.refusal_text = doc["refusal_text"].get<std::string>();
    if (doc.contains("pool_file")) cfg.pool_file = doc["pool_file"].get<std::string>();
    if (doc.contains("append")) cfg.append = doc["append"].get<bool>();
    if (doc.contains("preset")) cfg.preset = doc["preset"].get<std::string>();
    if (doc.contains("endpoint")) cfg.endpoint = doc["endpoint"].get<std::string>();
    if (doc.contains("model")) cfg.model = doc["model"].get<std::string>();
    if (doc.contains("parallelism")) cfg.parallelism = doc["parallelism"].get<int>();
    if (doc.contains("max_tokens")) cfg.max_tokens = doc["max_tokens"].get<int>();
    if (doc.contains("protocol")) cfg.protocol = doc["protocol"].get<std::string>();
    if (doc.contains("api_key_env")) cfg.api_key_env = doc["api_key_env"].get<std::string>();
    if (doc.contains("output_dir")) cfg.output_dir = doc["output_dir"].get<std::string>();
    return cfg;
}

std::vector<std::string> pool_words_from_file(const std::string& path) {
    std::vector<std::string> words;
    for (const auto& line : split_lines(read_text_file(path))) {
        const std::string w = trim(line);
        if (!w.empty()) words.push_back(w);
    }
    if (words.empty()) throw DataError("pool file '" + path + "' has no entries");
    return words;
}

// ---------------------------------------------------------------------------
// convert

// Registry override for user-defined tasks; empty path selects the builtin.
TemplateRegistry load_registry(const std::string& templates_file) {
    if (templates_file.empty()) return TemplateRegistry::builtin();
    return TemplateRegistry::from_json_file(templates_file);
}

struct ConvertArgs {
    std::string manifest;
    std::string templates_file;
    std::vector<std::string> tasks;
    std::string rows_file;
    std::string rows_dir;
    std::string dataset;
    uint64_t seed = 0;
    std::string output;
    std::string output_dir;
};

int run_convert(const ConvertArgs& args) {
    const TemplateRegistry registry = load_registry(args.templates_file);
    const TaskCatalog catalog = load_manifest(args.manifest, registry);
    if (args.tasks.empty()) throw ConfigError("convert: at least one --task required");
    if (args.tasks.size() > 1 && args.rows_dir.empty())
        throw ConfigError("convert: multiple tasks need --rows-dir");
    if (args.tasks.size() > 1 && args.output_dir.empty())
        throw ConfigError("convert: multiple tasks need --output-dir");

    for (const auto& code : args.tasks) {
        const TaskSpec& task = catalog.lookup(code);
        const fs::path rows_path = !args.rows_file.empty() && args.tasks.size() == 1
                                       ? fs::path(args.rows_file)
                                       : fs::path(args.rows_dir) / (code + ".csv");
        const auto records = ingest_rows(catalog, code, rows_path, args.dataset);

        Corpus corpus;
        corpus.header.seed = args.seed;
        corpus.header.manifest_hash = catalog.manifest_hash();
        corpus.records = compile_task(task, records, registry, args.seed);

        const fs::path out = args.tasks.size() == 1 && !args.output.empty()
                                 ? fs::path(args.output)
                                 : fs::path(args.output_dir) / (code + ".jsonl");
        write_corpus(corpus, out);
        write_stage_manifest(out, {{"subcommand", "convert"},
                                   {"manifest", args.manifest},
                                   {"manifest_hash", catalog.manifest_hash()},
                                   {"task", code},
                                   {"rows", rows_path.string()},
                                   {"seed", args.seed},
                                   {"records", corpus.records.size()}});
        std::cout << "convert " << code << ": " << corpus.records.size() << " records -> "
                  << out.string() << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// inject

struct InjectArgs {
    std::string manifest;
    std::string templates_file;
    std::string task;
    std::string input;
    std::string output;
    std::string testset_output;
    size_t testset_size = 100;
    double ratio = 0.05;
    std::string refusal_text;
    std::string pool_file;
    bool append = false;
    bool no_random_strings = false;
    uint64_t seed = 0;
};

int run_inject(const InjectArgs& args) {
    const TemplateRegistry registry = load_registry(args.templates_file);
    const TaskCatalog catalog = load_manifest(args.manifest, registry);
    const TaskSpec& task = catalog.lookup(args.task);

    auto loaded = read_corpus(args.input);
    print_warnings(loaded.warnings);

    CounterexamplePolicy policy;
    policy.ratio = args.ratio;
    policy.seed = args.seed;
    policy.append = args.append;
    policy.random_strings = !args.no_random_strings;
    if (!args.refusal_text.empty()) policy.refusal_template = args.refusal_text;
    if (!args.pool_file.empty()) policy.words = pool_words_from_file(args.pool_file);

    CounterexampleForge forge(task, policy, registry);
    Corpus out = loaded.corpus;
    out.header.seed = args.seed;
    out.records = forge.inject(loaded.corpus.records);

    size_t counter_count = 0;
    for (const auto& r : out.records)
        if (r.meta.origin == Origin::Counterexample) ++counter_count;

    write_corpus(out, args.output);
    write_stage_manifest(fs::path(args.output),
                         {{"subcommand", "inject"},
                          {"task", args.task},
                          {"input", args.input},
                          {"seed", args.seed},
                          {"ratio", args.ratio},
                          {"mode", args.append ? "append" : "replace"},
                          {"total_records", out.records.size()},
                          {"counterexamples", counter_count},
                          {"refusal_template", policy.refusal_template}});
    std::cout << "inject " << args.task << ": " << counter_count << " counterexamples in "
              << out.records.size() << " records -> " << args.output << "\n";

    if (!args.testset_output.empty()) {
        std::set<std::string> real_inputs;
        for (const auto& r : loaded.corpus.records) real_inputs.insert(r.input);
        Corpus testset;
        testset.header = out.header;
        testset.records = forge.build_testset(args.testset_size, real_inputs);
        write_corpus(testset, args.testset_output);
        write_stage_manifest(fs::path(args.testset_output),
                             {{"subcommand", "inject-testset"},
                              {"task", args.task},
                              {"seed", args.seed},
                              {"records", testset.records.size()}});
        std::cout << "inject " << args.task << ": " << testset.records.size()
                  << " held-out counterexamples -> " << args.testset_output << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    std::string manifest;
    std::string templates_file;
    std::string variant = "syn1";
    std::vector<std::string> aux;  // CODE=FILE
    std::string target_corpus;
    bool volume_match = false;
    size_t reference_count = 0;
    uint64_t seed = 0;
    std::string output;
    std::string output_dir;
};

int run_synth(const SynthArgs& args) {
    const TemplateRegistry registry = load_registry(args.templates_file);
    const TaskCatalog catalog = load_manifest(args.manifest, registry);
    const SynVariant variant = syn_variant_from_name(args.variant);
    if (args.aux.empty()) throw ConfigError("synth: at least one --aux CODE=FILE required");

    std::vector<AuxTask> aux_tasks;
    std::set<std::string> real_inputs;
    for (const auto& spec : args.aux) {
        const size_t eq = spec.find('=');
        if (eq == std::string::npos)
            throw ConfigError("synth: --aux expects CODE=FILE, got '" + spec + "'");
        AuxTask aux;
        aux.code = spec.substr(0, eq);
        aux.kind = catalog.lookup(aux.code).kind;
        aux.rows = ingest_rows(catalog, aux.code, spec.substr(eq + 1));
        for (const auto& r : aux.rows) real_inputs.insert(r.input_repr);
        aux_tasks.push_back(std::move(aux));
    }

    RngStream rng(args.seed);
    SynResult transformed;
    switch (variant) {
        case SynVariant::Syn1: transformed = make_syn1(aux_tasks, rng); break;
        case SynVariant::Syn2: transformed = make_syn2(aux_tasks, real_inputs, rng); break;
        case SynVariant::Syn3: transformed = make_syn3(aux_tasks, real_inputs, rng); break;
        case SynVariant::RealGeneral:
        case SynVariant::RealSpecialized:
            transformed.tasks = aux_tasks;
            break;
    }
    print_warnings(transformed.warnings);

    ordered_json stage = {{"subcommand", "synth"},
                          {"variant", syn_variant_name(variant)},
                          {"seed", args.seed}};
    if (variant == SynVariant::Syn2 || variant == SynVariant::Syn3) {
        stage["code_alphabet"] = "A-Z";
        stage["code_length_min"] = kSynCodeMinLen;
        stage["code_length_max"] = kSynCodeMaxLen;
    }

    if (!args.target_corpus.empty()) {
        auto target = read_corpus(args.target_corpus);
        print_warnings(target.warnings);

        std::vector<std::vector<InstructionRecord>> aux_corpora;
        const Origin origin = variant == SynVariant::Syn1   ? Origin::Syn1
                              : variant == SynVariant::Syn2 ? Origin::Syn2
                              : variant == SynVariant::Syn3 ? Origin::Syn3
                                                            : Origin::Real;
        for (const auto& aux : transformed.tasks) {
            auto records = compile_task(catalog.lookup(aux.code), aux.rows, registry, args.seed);
            for (auto& r : records) r.meta.origin = origin;
            aux_corpora.push_back(std::move(records));
        }

        AblationSeriesSpec series;
        series.variant = variant;
        series.volume_match = args.volume_match;
        series.reference_count = args.reference_count;
        series.seed = args.seed;
        for (const auto& aux : transformed.tasks) series.auxiliary_tasks.push_back(aux.code);

        Corpus out;
        out.header.seed = args.seed;
        out.header.manifest_hash = catalog.manifest_hash();
        out.records = assemble_series(target.corpus.records, aux_corpora, series);
        if (args.output.empty()) throw ConfigError("synth: --target mode requires -o");
        write_corpus(out, args.output);
        stage["target"] = args.target_corpus;
        stage["volume_match"] = args.volume_match;
        if (args.volume_match) stage["reference_count"] = args.reference_count;
        stage["records"] = out.records.size();
        write_stage_manifest(fs::path(args.output), std::move(stage));
        std::cout << "synth " << syn_variant_name(variant) << ": assembled "
                  << out.records.size() << " records -> " << args.output << "\n";
        return 0;
    }

    const fs::path out_dir = args.output_dir.empty() ? fs::path(".") : fs::path(args.output_dir);
    ordered_json task_counts = ordered_json::object();
    fs::path first_out;
    for (const auto& aux : transformed.tasks) {
        const fs::path out = out_dir / (aux.code + "." + syn_variant_name(variant) + ".csv");
        if (first_out.empty()) first_out = out;
        write_records_csv(aux.rows, out);
        task_counts[aux.code] = aux.rows.size();
        std::cout << "synth " << syn_variant_name(variant) << " " << aux.code << ": "
                  << aux.rows.size() << " rows -> " << out.string() << "\n";
    }
    stage["rows_per_task"] = std::move(task_counts);
    write_stage_manifest(first_out, std::move(stage));
    return 0;
}

// ---------------------------------------------------------------------------
// mix

struct MixArgs {
    std::vector<std::string> inputs;
    std::string general;
    uint64_t seed = 0;
    std::string output;
};

int run_mix(const MixArgs& args) {
    if (args.inputs.empty()) throw ConfigError("mix: at least one input corpus required");

    std::vector<Corpus> corpora;
    std::vector<std::string> warnings;
    for (const auto& path : args.inputs) {
        auto loaded = read_corpus(path);
        warnings.insert(warnings.end(), loaded.warnings.begin(), loaded.warnings.end());
        corpora.push_back(std::move(loaded.corpus));
    }
    print_warnings(warnings);

    Corpus out;
    if (!args.general.empty()) {
        if (args.inputs.size() != 1)
            throw ConfigError("mix: --general expects exactly one science corpus input");
        auto general = read_corpus(args.general);
        print_warnings(general.warnings);
        RngStream rng(args.seed);
        auto mixed = mix_with_general(corpora[0].records, general.corpus.records, rng);
        print_warnings(mixed.warnings);
        out.header = corpora[0].header;
        out.header.seed = args.seed;
        out.records = std::move(mixed.records);
    } else {
        out = mix_multitask(corpora, args.seed);
    }

    write_corpus(out, args.output);
    write_stage_manifest(fs::path(args.output), {{"subcommand", "mix"},
                                                 {"inputs", args.inputs},
                                                 {"general", args.general},
                                                 {"seed", args.seed},
                                                 {"records", out.records.size()}});
    std::cout << "mix: " << out.records.size() << " records -> " << args.output << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// split

struct SplitArgs {
    std::string input;
    std::string fraction = "0.2";
    uint64_t seed = 0;
    std::string train_out;
    std::string test_out;
};

int run_split(const SplitArgs& args) {
    auto loaded = read_corpus(args.input);
    print_warnings(loaded.warnings);
    const double fraction = parse_fraction(args.fraction);
    auto result = split(loaded.corpus, fraction, args.seed);
    print_warnings(result.warnings);
    write_corpus(result.train, args.train_out);
    write_corpus(result.test, args.test_out);
    write_stage_manifest(fs::path(args.train_out),
                         {{"subcommand", "split"},
                          {"input", args.input},
                          {"test_fraction", fraction},
                          {"seed", args.seed},
                          {"train_records", result.train.records.size()},
                          {"test_records", result.test.records.size()},
                          {"stratified_warnings", result.warnings}});
    std::cout << "split: " << result.train.records.size() << " train / "
              << result.test.records.size() << " test\n";
    return 0;
}

// ---------------------------------------------------------------------------
// qa-prompt / qa-parse / qa-filter

int run_qa_prompt(const std::string& paper_file, const std::string& output) {
    const GenerationPrompt prompt = build_prompt(read_text_file(paper_file));
    write_text_file(output, prompt.rendered);
    std::cout << "qa-prompt: " << prompt.rendered.size() << " bytes -> " << output << "\n";
    return 0;
}

ordered_json pair_to_json(const QAPair& p) {
    ordered_json j;
    j["index"] = p.index;
    j["question"] = p.question;
    j["answer"] = p.answer;
    j["keywords"] = p.keywords;
    j["source_id"] = p.source_id;
    return j;
}

QAPair pair_from_json(const json& j) {
    QAPair p;
    p.index = j.at("index").get<int>();
    p.question = j.at("question").get<std::string>();
    p.answer = j.at("answer").get<std::string>();
    if (j.contains("keywords"))
        for (const auto& k : j["keywords"]) p.keywords.push_back(k.get<std::string>());
    p.source_id = j.value("source_id", "");
    return p;
}

std::vector<QAPair> read_pairs(const fs::path& path) {
    std::vector<QAPair> pairs;
    size_t line_no = 0;
    for (const auto& line : split_lines(read_text_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            pairs.push_back(pair_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " +
                            e.what());
        }
    }
    return pairs;
}

void write_pairs(const std::vector<QAPair>& pairs, const fs::path& path) {
    std::string out;
    for (const auto& p : pairs) out += pair_to_json(p).dump() + "\n";
    write_text_file(path, out);
}

// One generator output per file, or a concatenated stream where a line equal
// to `delimiter` separates per-paper documents.
int run_qa_parse(const std::string& input, const std::string& source_id,
                 const std::string& delimiter, const std::string& output) {
    std::vector<std::string> documents;
    const std::string text = read_text_file(input);
    if (delimiter.empty()) {
        documents.push_back(text);
    } else {
        std::string current;
        for (const auto& line : split_lines(text)) {
            if (trim(line) == delimiter) {
                documents.push_back(current);
                current.clear();
            } else {
                current += line;
                current += '\n';
            }
        }
        documents.push_back(current);
    }

    std::vector<QAPair> all_pairs;
    std::vector<std::string> warnings;
    size_t documents_parsed = 0;
    size_t documents_failed = 0;
    for (size_t d = 0; d < documents.size(); ++d) {
        if (trim(documents[d]).empty()) continue;
        const std::string id = documents.size() == 1
                                   ? source_id
                                   : source_id + "#" + std::to_string(d + 1);
        try {
            QaParse parsed = parse_generator_output(documents[d], id);
            for (const auto& w : parsed.warnings) warnings.push_back(id + ": " + w);
            all_pairs.insert(all_pairs.end(), parsed.pairs.begin(), parsed.pairs.end());
            ++documents_parsed;
        } catch (const DataError& e) {
            // a bad document in a stream is reported, not fatal; a lone bad
            // document still is
            if (documents.size() == 1) throw;
            warnings.push_back(id + ": " + e.what());
            ++documents_failed;
        }
    }
    print_warnings(warnings);
    write_pairs(all_pairs, output);
    write_stage_manifest(fs::path(output), {{"subcommand", "qa-parse"},
                                            {"input", input},
                                            {"source_id", source_id},
                                            {"delimiter", delimiter},
                                            {"documents_parsed", documents_parsed},
                                            {"documents_failed", documents_failed},
                                            {"pairs", all_pairs.size()},
                                            {"warnings", warnings}});
    std::cout << "qa-parse: " << all_pairs.size() << " pairs from " << documents_parsed
              << " document(s) -> " << output << "\n";
    return 0;
}

int run_templates_export(const std::string& templates_file, const std::string& output) {
    const TemplateRegistry registry = load_registry(templates_file);
    registry.export_json(output);
    std::cout << "templates: " << registry.all().size() << " templates -> " << output << "\n";
    return 0;
}

int run_qa_filter(const std::string& input, const std::string& output,
                  const std::string& corpus_output) {
    const auto pairs = read_pairs(input);
    const FilterResult filtered = filter_self_referential(pairs);
    write_pairs(filtered.kept, output);
    write_stage_manifest(fs::path(output), {{"subcommand", "qa-filter"},
                                            {"input", input},
                                            {"kept", filtered.kept.size()},
                                            {"removed", filtered.removed}});
    std::cout << "qa-filter: removed " << filtered.removed << ", kept " << filtered.kept.size()
              << " -> " << output << "\n";
    if (!corpus_output.empty()) {
        Corpus corpus;
        corpus.records = qa_to_instructions(filtered.kept);
        write_corpus(corpus, corpus_output);
        std::cout << "qa-filter: corpus -> " << corpus_output << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string manifest;
    std::string task;
    std::string test_corpus;
    std::string predictions;
    std::string compare;
    std::string gold_corpus;
    std::string counterexample_corpus;
    std::string method;
    std::string endpoint;
    std::string model;
    std::string preset = "task";
    std::string protocol = "chat";
    std::string api_key_env = kDefaultApiKeyEnv;
    std::string checkpoint;
    std::string refusal_prefix;
    int parallelism = 4;
    int max_tokens = 256;
    std::string report_out = "report";
};

std::string refusal_prefix_or_default(const EvalArgs& args) {
    return args.refusal_prefix.empty() ? default_refusal_prefix() : args.refusal_prefix;
}

// Gold labels/values recovered from a rendered corpus.
struct GoldValues {
    std::vector<int> labels;
    std::vector<double> numbers;
};

GoldValues gold_from_corpus(const TaskSpec& task, const Corpus& corpus,
                            const std::string& refusal_prefix) {
    GoldValues gold;
    for (size_t i = 0; i < corpus.records.size(); ++i) {
        const auto parsed = parse_prediction(task, corpus.records[i].output, refusal_prefix);
        if (task.kind == TaskKind::Classification) {
            if (parsed.kind != OutcomeKind::Label)
                throw DataError("gold record " + std::to_string(i + 1) +
                                ": output does not contain a label");
            gold.labels.push_back(*parsed.label_index);
        } else {
            if (parsed.kind != OutcomeKind::Numeric)
                throw DataError("gold record " + std::to_string(i + 1) +
                                ": output does not contain a number");
            gold.numbers.push_back(*parsed.value);
        }
    }
    return gold;
}

TaskMetricRow score_task(const TaskSpec& task, const Corpus& gold_corpus,
                         const std::vector<PredictionRecord>& predictions,
                         const std::string& refusal_prefix) {
    if (gold_corpus.records.size() != predictions.size())
        throw DataError("prediction count " + std::to_string(predictions.size()) +
                        " does not match test corpus size " +
                        std::to_string(gold_corpus.records.size()));
    const GoldValues gold = gold_from_corpus(task, gold_corpus, refusal_prefix);

    TaskMetricRow row;
    row.task = task.code;
    row.n_evaluated = predictions.size();
    if (task.kind == TaskKind::Classification) {
        std::vector<std::optional<int>> preds;
        for (const auto& p : predictions) {
            std::optional<int> label;
            if (p.status == PredictionRecord::Status::Ok) {
                const auto parsed = parse_prediction(task, p.raw_output, refusal_prefix);
                if (parsed.kind == OutcomeKind::Label) label = parsed.label_index;
            }
            if (!label) ++row.n_unparseable;
            preds.push_back(label);
        }
        row.metric = "macro_f1";
        row.value = macro_f1(preds, gold.labels);
    } else {
        std::vector<std::optional<double>> preds;
        for (const auto& p : predictions) {
            std::optional<double> value;
            if (p.status == PredictionRecord::Status::Ok) {
                const auto parsed = parse_prediction(task, p.raw_output, refusal_prefix);
                if (parsed.kind == OutcomeKind::Numeric) value = parsed.value;
            }
            if (!value) ++row.n_unparseable;
            preds.push_back(value);
        }
        row.metric = "mae";
        row.value = mae(preds, gold.numbers).value;
    }
    return row;
}

void emit_report(const MetricsReport& report, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_text_file(out_dir / "report.json", report.to_json());
    write_text_file(out_dir / "report.txt", report.render_text());
    std::cout << report.render_text();
    std::cout << "eval: report -> " << (out_dir / "report.json").string() << "\n";
}

// Simple delimited predictions table: header row with prediction/expected
// (and anything else); tab or comma separated.
MetricsReport eval_simple_table(const EvalArgs& args) {
    std::string text = read_text_file(args.predictions);
    const size_t eol = text.find('\n');
    const std::string head = text.substr(0, eol == std::string::npos ? text.size() : eol);
    if (head.find('\t') != std::string::npos) {
        for (auto& c : text)
            if (c == '\t') c = ',';
    }
    const CsvTable table = parse_csv(text);
    const size_t pred_col = table.column("prediction");
    const size_t exp_col = table.column("expected");

    std::vector<std::optional<double>> preds;
    std::vector<double> golds;
    for (size_t i = 0; i < table.rows.size(); ++i) {
        const std::string& cell = table.rows[i][pred_col];
        if (cell.empty() || cell == "N/A" || cell == "NA" || cell == "n/a")
            preds.push_back(std::nullopt);
        else {
            const auto v = parse_decimal(cell);
            if (!v)
                throw DataError(args.predictions + ": row " + std::to_string(i + 2) +
                                ": prediction '" + cell + "' is not numeric");
            preds.push_back(*v);
        }
        const auto e = parse_decimal(table.rows[i][exp_col]);
        if (!e)
            throw DataError(args.predictions + ": row " + std::to_string(i + 2) +
                            ": expected '" + table.rows[i][exp_col] + "' is not numeric");
        golds.push_back(*e);
    }

    const MadRmse stats = mad_rmse(preds, golds);
    std::string method = args.method;
    if (method.empty()) method = fs::path(args.predictions).stem().string();

    MetricsReport report;
    TaskMetricRow row;
    row.task = args.task.empty() ? method : args.task;
    row.metric = "mae";
    row.value = stats.mad;
    row.n_evaluated = golds.size();
    row.n_unparseable = golds.size() - stats.n;
    report.task_rows.push_back(row);
    report.summaries.push_back({method, stats.mad, stats.rmse, stats.n});
    return report;
}

int run_eval(const EvalArgs& args) {
    const std::string refusal_prefix = refusal_prefix_or_default(args);

    // Offline: Table-1-style wide comparison file.
    if (!args.compare.empty()) {
        const ComparisonInput input = read_comparison_csv(args.compare);
        const MetricsReport report = build_report({}, &input, {}, nullptr);
        emit_report(report, args.report_out);
        return 0;
    }

    // Offline: prediction files.
    if (!args.predictions.empty()) {
        const std::string ext = fs::path(args.predictions).extension().string();
        if (ext == ".csv" || ext == ".tsv") {
            MetricsReport report = eval_simple_table(args);
            if (!args.manifest.empty() && !args.task.empty()) {
                const TaskCatalog catalog = load_manifest(args.manifest);
                report.baseline_rows =
                    build_report(report.task_rows, nullptr, {}, &catalog).baseline_rows;
            }
            emit_report(report, args.report_out);
            return 0;
        }
        if (args.manifest.empty() || args.task.empty() || args.gold_corpus.empty())
            throw ConfigError("eval: .jsonl predictions need --manifest, --task and --gold");
        const TaskCatalog catalog = load_manifest(args.manifest);
        const TaskSpec& task = catalog.lookup(args.task);
        auto gold = read_corpus(args.gold_corpus);
        print_warnings(gold.warnings);
        const auto predictions = read_predictions(args.predictions);
        const TaskMetricRow row = score_task(task, gold.corpus, predictions, refusal_prefix);
        const MetricsReport report = build_report({row}, nullptr, {}, &catalog);
        emit_report(report, args.report_out);
        return 0;
    }

    // Online: query an endpoint.
    if (args.endpoint.empty())
        throw ConfigError("eval: need --endpoint (online) or --predictions/--compare (offline)");
    if (args.manifest.empty() || args.task.empty() || args.test_corpus.empty())
        throw ConfigError("eval: online mode needs --manifest, --task and --test");

    const char* key = std::getenv(args.api_key_env.c_str());
    if (key == nullptr || std::string(key).empty())
        throw EnvError("API key environment variable " + args.api_key_env +
                       " is not set; refusing to start an online run");

    const TaskCatalog catalog = load_manifest(args.manifest);
    const TaskSpec& task = catalog.lookup(args.task);
    auto test = read_corpus(args.test_corpus);
    print_warnings(test.warnings);

    InferenceParams params =
        args.preset == "qa" ? qa_generation_preset() : task_inference_preset();
    params.endpoint = args.endpoint;
    params.model_name = args.model;
    params.api_key = key;
    params.parallelism = args.parallelism;
    params.max_tokens = args.max_tokens;
    params.protocol = args.protocol == "completions" ? WireProtocol::Completions
                                                     : WireProtocol::ChatCompletions;

    InferenceClient client(params);
    const fs::path checkpoint = args.checkpoint.empty()
                                    ? fs::path(args.report_out) / "checkpoint.jsonl"
                                    : fs::path(args.checkpoint);
    fs::create_directories(args.report_out);
    const auto predictions = client.batch_evaluate(test.corpus, checkpoint);
    write_predictions(predictions, fs::path(args.report_out) / "predictions.jsonl");

    const TaskMetricRow row = score_task(task, test.corpus, predictions, refusal_prefix);

    std::vector<CounterexampleRow> counter_rows;
    if (!args.counterexample_corpus.empty()) {
        auto counter = read_corpus(args.counterexample_corpus);
        print_warnings(counter.warnings);
        const auto counter_preds = client.batch_evaluate(
            counter.corpus, fs::path(args.report_out) / "counterexample_checkpoint.jsonl");
        write_predictions(counter_preds,
                          fs::path(args.report_out) / "counterexample_predictions.jsonl");
        std::vector<ParsedOutcome> outcomes;
        for (const auto& p : counter_preds)
            outcomes.push_back(parse_prediction(task, p.raw_output, refusal_prefix));
        const CounterexampleRates rates = counterexample_rates(outcomes);
        CounterexampleRow crow;
        crow.task = task.code;
        crow.rejection_rate = rates.rejection_rate;
        crow.hallucination_rate = rates.hallucination_rate;
        crow.n = rates.n;
        crow.normal_metric = row.metric;
        crow.normal_value = row.value;
        counter_rows.push_back(crow);
    }

    const MetricsReport report = build_report({row}, nullptr, counter_rows, &catalog);
    emit_report(report, args.report_out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"matlift: language-interfaced materials dataset pipeline"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_file;
    app.add_option("--config", config_file, "run-config file; its values override flags");

    ConvertArgs convert_args;
    auto* convert = app.add_subcommand("convert", "render task rows into an instruction corpus");
    convert->add_option("--manifest", convert_args.manifest)->required();
    convert->add_option("--templates", convert_args.templates_file,
                        "template registry file (default: builtin)");
    convert->add_option("--task", convert_args.tasks, "task code (repeatable)");
    convert->add_option("--rows", convert_args.rows_file, "source rows CSV (single task)");
    convert->add_option("--rows-dir", convert_args.rows_dir, "directory of <code>.csv files");
    convert->add_option("--dataset", convert_args.dataset, "force a source dataset binding");
    convert->add_option("--seed", convert_args.seed);
    convert->add_option("-o,--output", convert_args.output);
    convert->add_option("--output-dir", convert_args.output_dir);

    InjectArgs inject_args;
    auto* inject = app.add_subcommand("inject", "mix counterexamples into a corpus");
    inject->add_option("--manifest", inject_args.manifest)->required();
    inject->add_option("--templates", inject_args.templates_file,
                       "template registry file (default: builtin)");
    inject->add_option("--task", inject_args.task)->required();
    inject->add_option("--in", inject_args.input)->required();
    inject->add_option("-o,--output", inject_args.output)->required();
    inject->add_option("--counterexample-ratio,--ratio", inject_args.ratio);
    inject->add_option("--refusal-text", inject_args.refusal_text);
    inject->add_option("--pool-file", inject_args.pool_file);
    inject->add_flag("--append", inject_args.append, "append instead of replacing records");
    inject->add_flag("--no-random-strings", inject_args.no_random_strings);
    inject->add_option("--seed", inject_args.seed);
    inject->add_option("--testset", inject_args.testset_output,
                       "also write a held-out counterexample test set");
    inject->add_option("--testset-size", inject_args.testset_size);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "build synthetic ablation datasets");
    synth->add_option("--manifest", synth_args.manifest)->required();
    synth->add_option("--templates", synth_args.templates_file,
                      "template registry file (default: builtin)");
    synth->add_option("--variant", synth_args.variant,
                      "syn1|syn2|syn3|real_general|real_specialized");
    synth->add_option("--aux", synth_args.aux, "auxiliary task as CODE=FILE (repeatable)");
    synth->add_option("--target", synth_args.target_corpus,
                      "assemble a series onto this target corpus");
    synth->add_flag("--volume-match", synth_args.volume_match);
    synth->add_option("--reference-count", synth_args.reference_count);
    synth->add_option("--seed", synth_args.seed);
    synth->add_option("-o,--output", synth_args.output);
    synth->add_option("--output-dir", synth_args.output_dir);

    MixArgs mix_args;
    auto* mix = app.add_subcommand("mix", "shuffle corpora into one training mix");
    mix->add_option("inputs", mix_args.inputs, "input corpora");
    mix->add_option("--general", mix_args.general,
                    "general QA corpus to balance against one science corpus");
    mix->add_option("--seed", mix_args.seed);
    mix->add_option("-o,--output", mix_args.output)->required();

    SplitArgs split_args;
    auto* split_cmd = app.add_subcommand("split", "train/test split");
    split_cmd->add_option("--in", split_args.input)->required();
    split_cmd->add_option("--test-fraction", split_args.fraction, "e.g. 0.2 or 1/6");
    split_cmd->add_option("--seed", split_args.seed);
    split_cmd->add_option("--train-out", split_args.train_out)->required();
    split_cmd->add_option("--test-out", split_args.test_out)->required();

    std::string qa_paper, qa_prompt_out;
    auto* qa_prompt = app.add_subcommand("qa-prompt", "render the QA generation prompt");
    qa_prompt->add_option("--paper", qa_paper)->required();
    qa_prompt->add_option("-o,--output", qa_prompt_out)->required();

    std::string qa_in, qa_source, qa_delimiter, qa_pairs_out;
    auto* qa_parse = app.add_subcommand("qa-parse", "parse generator output into QA pairs");
    qa_parse->add_option("--in", qa_in)->required();
    qa_parse->add_option("--source-id", qa_source);
    qa_parse->add_option("--delimiter", qa_delimiter,
                         "per-paper delimiter line for concatenated streams");
    qa_parse->add_option("-o,--output", qa_pairs_out)->required();

    std::string qf_in, qf_out, qf_corpus;
    auto* qa_filter = app.add_subcommand("qa-filter", "drop self-referential QA pairs");
    qa_filter->add_option("--in", qf_in)->required();
    qa_filter->add_option("-o,--output", qf_out)->required();
    qa_filter->add_option("--emit-corpus", qf_corpus, "also write an instruction corpus");

    std::string tmpl_in, tmpl_out;
    auto* templates_cmd =
        app.add_subcommand("templates", "export the template registry for customization");
    templates_cmd->add_option("--templates", tmpl_in, "registry file to re-export");
    templates_cmd->add_option("-o,--output", tmpl_out)->required();

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "score predictions or query an endpoint");
    eval_cmd->add_option("--manifest", eval_args.manifest);
    eval_cmd->add_option("--task", eval_args.task);
    eval_cmd->add_option("--test", eval_args.test_corpus, "test corpus (online mode)");
    eval_cmd->add_option("--predictions", eval_args.predictions,
                         "offline: .jsonl prediction records or .csv/.tsv table");
    eval_cmd->add_option("--compare", eval_args.compare,
                         "offline: wide comparison CSV (composition,experimental,<methods>)");
    eval_cmd->add_option("--gold", eval_args.gold_corpus, "gold corpus for .jsonl predictions");
    eval_cmd->add_option("--counterexample-test", eval_args.counterexample_corpus);
    eval_cmd->add_option("--method", eval_args.method, "method name for table predictions");
    eval_cmd->add_option("--endpoint", eval_args.endpoint);
    eval_cmd->add_option("--model", eval_args.model);
    eval_cmd->add_option("--preset", eval_args.preset, "task (0.8/0.75) or qa (0.6/0.9)");
    eval_cmd->add_option("--protocol", eval_args.protocol, "chat or completions");
    eval_cmd->add_option("--api-key-env", eval_args.api_key_env);
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint);
    eval_cmd->add_option("--refusal-prefix", eval_args.refusal_prefix);
    eval_cmd->add_option("--parallelism", eval_args.parallelism);
    eval_cmd->add_option("--max-tokens", eval_args.max_tokens);
    eval_cmd->add_option("--report-out", eval_args.report_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!config_file.empty()) {
            const RunConfig cfg = load_run_config(config_file);
            if (cfg.manifest) {
                convert_args.manifest = *cfg.manifest;
                inject_args.manifest = *cfg.manifest;
                synth_args.manifest = *cfg.manifest;
                eval_args.manifest = *cfg.manifest;
            }
            if (!cfg.tasks.empty()) convert_args.tasks = cfg.tasks;
            if (cfg.seeds.count("convert")) convert_args.seed = cfg.seeds.at("convert");
            if (cfg.seeds.count("inject")) inject_args.seed = cfg.seeds.at("inject");
            if (cfg.seeds.count("synth")) synth_args.seed = cfg.seeds.at("synth");
            if (cfg.seeds.count("mix")) mix_args.seed = cfg.seeds.at("mix");
            if (cfg.seeds.count("split")) split_args.seed = cfg.seeds.at("split");
            if (cfg.split_fraction) split_args.fraction = std::to_string(*cfg.split_fraction);
            if (cfg.counterexample_ratio) inject_args.ratio = *cfg.counterexample_ratio;
            if (cfg.refusal_text) inject_args.refusal_text = *cfg.refusal_text;
            if (cfg.pool_file) inject_args.pool_file = *cfg.pool_file;
            if (cfg.append) inject_args.append = *cfg.append;
            if (cfg.preset) eval_args.preset = *cfg.preset;
            if (cfg.endpoint) eval_args.endpoint = *cfg.endpoint;
            if (cfg.model) eval_args.model = *cfg.model;
            if (cfg.parallelism) eval_args.parallelism = *cfg.parallelism;
            if (cfg.max_tokens) eval_args.max_tokens = *cfg.max_tokens;
            if (cfg.protocol) eval_args.protocol = *cfg.protocol;
            if (cfg.api_key_env) eval_args.api_key_env = *cfg.api_key_env;
            if (cfg.output_dir) {
                convert_args.output_dir = *cfg.output_dir;
                synth_args.output_dir = *cfg.output_dir;
                eval_args.report_out = *cfg.output_dir;
            }
        }

        if (convert->parsed()) return run_convert(convert_args);
        if (inject->parsed()) return run_inject(inject_args);
        if (synth->parsed()) return run_synth(synth_args);
        if (mix->parsed()) return run_mix(mix_args);
        if (split_cmd->parsed()) return run_split(split_args);
        if (qa_prompt->parsed()) return run_qa_prompt(qa_paper, qa_prompt_out);
        if (qa_parse->parsed()) return run_qa_parse(qa_in, qa_source, qa_delimiter, qa_pairs_out);
        if (qa_filter->parsed()) return run_qa_filter(qf_in, qf_out, qf_corpus);
        if (templates_cmd->parsed()) return run_templates_export(tmpl_in, tmpl_out);
        if (eval_cmd->parsed()) return run_eval(eval_args);
        throw ConfigError("no subcommand given");
    } catch (const EnvError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
