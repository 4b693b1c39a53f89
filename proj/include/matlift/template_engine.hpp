#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "matlift/instruction.hpp"
#include "matlift/rng.hpp"
#include "matlift/task_catalog.hpp"

namespace matlift {

// Placeholders recognized in patterns: <material_type>, <material_representation>,
// <has_>, <property>, <property_value>, <yes_no>, <label>.
struct Template {
    std::string id;
    TaskKind kind = TaskKind::Regression;
    std::string instruction_pattern;
    std::string input_pattern;
    std::string output_pattern;

    bool operator==(const Template&) const = default;
};

class TemplateRegistry {
public:
    // The embedded, versioned registry covering the shipped 22-task manifest.
    static const TemplateRegistry& builtin();

    static TemplateRegistry from_json_file(const std::filesystem::path& path);
    void export_json(const std::filesystem::path& path) const;

    const Template& get(const std::string& id) const;
    bool contains(const std::string& id) const;
    const std::vector<Template>& all() const { return templates_; }
    int version() const { return version_; }

    void add(Template t);

private:
    std::vector<Template> templates_;
    std::map<std::string, size_t> index_;
    int version_ = 1;
};

// Loads a task manifest and checks that every referenced template id exists
// in the registry.
TaskCatalog load_manifest(const std::filesystem::path& path,
                          const TemplateRegistry& registry = TemplateRegistry::builtin());

// Substitutes placeholders in one pattern; throws DataError when a
// placeholder-shaped token survives substitution.
std::string substitute_placeholders(const std::string& pattern,
                                    const std::map<std::string, std::string>& values);

InstructionRecord render(const TaskSpec& task, const TabularRecord& record,
                         const Template& tmpl);

const Template& select_template(const TaskSpec& task, const TemplateRegistry& registry,
                                RngStream& rng);

std::vector<InstructionRecord> compile_task(const TaskSpec& task,
                                            const std::vector<TabularRecord>& records,
                                            const TemplateRegistry& registry, uint64_t seed);

}  // namespace matlift
