#include "matlift/template_engine.hpp"

#include <algorithm>
#include <cctype>

#include <json.hpp>

#include "matlift/csv.hpp"
#include "matlift/errors.hpp"

namespace matlift {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kRegistryVersion = 1;

const char* kClsSentenceOutput = "<yes_no>, <material_representation> <has_> <property>.";

TemplateRegistry make_builtin() {
    TemplateRegistry reg;
    auto cls = [&](const char* id, const char* instruction, const char* output) {
        reg.add({id, TaskKind::Classification, instruction, "<material_representation>", output});
    };
    auto rgr = [&](const char* id, const char* instruction) {
        reg.add({id, TaskKind::Regression, instruction, "<material_representation>",
                 "<property_value>"});
    };

    cls("cls-tell-given", "Tell me if given <material_type> <has_> <property>.",
        kClsSentenceOutput);
    cls("cls-tell-this", "Tell me if this <material_type> <has_> <property>.",
        kClsSentenceOutput);
    cls("cls-does-given", "Does given <material_type> <has_> <property>?", kClsSentenceOutput);
    cls("cls-label-predict", "Predict the <property> of this given <material_type>.", "<label>");
    cls("cls-label-what", "What is the <property> of this given <material_type>?", "<label>");
    cls("cls-absorb-region",
        "Given this <material_type>, predict whether the compound would absorb light in the "
        "ultraviolet region or the visible region?",
        "<label>");

    rgr("reg-given-a", "Given a <material_type>, write its <property>.");
    rgr("reg-given-this", "Given this <material_type>, write its <property>.");
    rgr("reg-given-bare", "Given <material_type>, write its <property>.");
    rgr("reg-predict-of-this-given", "Predict the <property> of this given <material_type>.");
    rgr("reg-predict-of-given", "Predict the <property> of given <material_type>.");
    rgr("reg-what-of-this-given", "What is the <property> of this given <material_type>?");
    rgr("reg-what-of-given", "What is the <property> of given <material_type>?");
    rgr("reg-what-of-this", "What is the <property> of this <material_type>?");
    rgr("reg-predict-for-a-given", "Predict the <property> for a given <material_type>.");
    return reg;
}

// Placeholder-shaped token: '<' + [a-z_]+ + '>'.
size_t find_placeholder(const std::string& text, size_t from, size_t* len_out) {
    for (size_t i = from; i < text.size(); ++i) {
        if (text[i] != '<') continue;
        size_t j = i + 1;
        while (j < text.size() && (std::islower(static_cast<unsigned char>(text[j])) || text[j] == '_'))
            ++j;
        if (j > i + 1 && j < text.size() && text[j] == '>') {
            *len_out = j - i + 1;
            return i;
        }
    }
    return std::string::npos;
}

}  // namespace

void TemplateRegistry::add(Template t) {
    if (index_.count(t.id)) throw ConfigError("duplicate template id '" + t.id + "'");
    index_[t.id] = templates_.size();
    templates_.push_back(std::move(t));
}

const TemplateRegistry& TemplateRegistry::builtin() {
    static const TemplateRegistry reg = make_builtin();
    return reg;
}

const Template& TemplateRegistry::get(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw DataError("unknown template id '" + id + "'");
    return templates_[it->second];
}

bool TemplateRegistry::contains(const std::string& id) const { return index_.count(id) != 0; }

TemplateRegistry TemplateRegistry::from_json_file(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw DataError("template registry: " + path.string() + ": " + e.what());
    }
    TemplateRegistry reg;
    if (doc.contains("version")) reg.version_ = doc["version"].get<int>();
    for (const auto& t : doc.at("templates")) {
        Template tmpl;
        tmpl.id = t.at("id").get<std::string>();
        const std::string kind = t.at("kind").get<std::string>();
        if (kind != "classification" && kind != "regression")
            throw DataError("template registry: unknown kind '" + kind + "'");
        tmpl.kind = kind == "classification" ? TaskKind::Classification : TaskKind::Regression;
        tmpl.instruction_pattern = t.at("instruction").get<std::string>();
        tmpl.input_pattern = t.at("input").get<std::string>();
        tmpl.output_pattern = t.at("output").get<std::string>();
        reg.add(std::move(tmpl));
    }
    return reg;
}

void TemplateRegistry::export_json(const std::filesystem::path& path) const {
    ordered_json doc;
    doc["version"] = version_;
    doc["templates"] = ordered_json::array();
    for (const auto& t : templates_) {
        ordered_json j;
        j["id"] = t.id;
        j["kind"] = task_kind_name(t.kind);
        j["instruction"] = t.instruction_pattern;
        j["input"] = t.input_pattern;
        j["output"] = t.output_pattern;
        doc["templates"].push_back(std::move(j));
    }
    write_text_file(path, doc.dump(2) + "\n");
}

TaskCatalog load_manifest(const std::filesystem::path& path, const TemplateRegistry& registry) {
    TaskCatalog catalog = TaskCatalog::load(path);
    for (const auto& task : catalog.tasks())
        for (const auto& id : task.template_ids)
            if (!registry.contains(id))
                throw DataError("manifest: task '" + task.code +
                                "' references unknown template '" + id + "'");
    return catalog;
}

std::string substitute_placeholders(const std::string& pattern,
                                    const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(pattern.size());
    size_t pos = 0;
    while (pos < pattern.size()) {
        size_t len = 0;
        const size_t ph = find_placeholder(pattern, pos, &len);
        if (ph == std::string::npos) {
            out += pattern.substr(pos);
            break;
        }
        out += pattern.substr(pos, ph - pos);
        const std::string name = pattern.substr(ph + 1, len - 2);
        const auto it = values.find(name);
        if (it == values.end())
            throw DataError("unresolved placeholder <" + name + ">");
        out += it->second;
        pos = ph + len;
    }
    size_t len = 0;
    if (find_placeholder(out, 0, &len) != std::string::npos)
        throw DataError("substitution produced a placeholder-shaped token");
    return out;
}

InstructionRecord render(const TaskSpec& task, const TabularRecord& record,
                         const Template& tmpl) {
    if (tmpl.kind != task.kind)
        throw DataError("template '" + tmpl.id + "' kind does not match task " + task.code);
    if (std::find(task.template_ids.begin(), task.template_ids.end(), tmpl.id) ==
        task.template_ids.end())
        throw DataError("template '" + tmpl.id + "' not listed for task " + task.code);

    std::map<std::string, std::string> values = {
        {"material_type", task.material_type},
        {"material_representation", record.input_repr},
        {"property", task.property},
    };
    if (task.kind == TaskKind::Classification) {
        if (!record.label_index || *record.label_index < 0 ||
            static_cast<size_t>(*record.label_index) >= task.label_vocab.size())
            throw DataError("task " + task.code + ": record lacks a valid label index");
        const std::string& label = task.label_vocab[*record.label_index];
        values["yes_no"] = label;
        values["label"] = label;
        if (!task.has_phrase.empty()) values["has_"] = task.has_phrase;
    } else {
        values["property_value"] = record.target;
    }

    InstructionRecord out;
    out.instruction = substitute_placeholders(tmpl.instruction_pattern, values);
    out.input = substitute_placeholders(tmpl.input_pattern, values);
    // The gold label flips the has-phrase to its negative form in the output
    // sentence only; instructions always use the affirmative phrasing.
    if (task.kind == TaskKind::Classification && record.label_index &&
        *record.label_index != 0 && !task.has_phrase_negative.empty())
        values["has_"] = task.has_phrase_negative;
    out.output = substitute_placeholders(tmpl.output_pattern, values);

    out.meta.task = task.code;
    out.meta.template_id = tmpl.id;
    out.meta.origin = Origin::Real;
    out.meta.source_dataset = record.source_dataset;
    out.meta.source_row = record.source_row;
    if (task.kind == TaskKind::Classification)
        out.meta.label = task.label_vocab[*record.label_index];
    return out;
}

const Template& select_template(const TaskSpec& task, const TemplateRegistry& registry,
                                RngStream& rng) {
    if (task.template_ids.empty())
        throw ConfigError("task " + task.code + " has an empty template list");
    const size_t i = static_cast<size_t>(rng.uniform_u64(task.template_ids.size()));
    return registry.get(task.template_ids[i]);
}

std::vector<InstructionRecord> compile_task(const TaskSpec& task,
                                            const std::vector<TabularRecord>& records,
                                            const TemplateRegistry& registry, uint64_t seed) {
    RngStream rng(seed);
    std::vector<InstructionRecord> out;
    out.reserve(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        const Template& tmpl = select_template(task, registry, rng);
        try {
            out.push_back(render(task, records[i], tmpl));
        } catch (const DataError& e) {
            throw DataError("task " + task.code + " row " + std::to_string(i + 1) + " (" +
                            records[i].source_dataset + ":" + records[i].source_row +
                            "): " + e.what());
        }
        out.back().meta.seed = seed;
    }
    return out;
}

}  // namespace matlift
