#include "matlift/qa_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "matlift/errors.hpp"
#include "matlift/text.hpp"

namespace matlift {

const std::string& generation_prompt_template() {
    static const std::string tmpl =
        "Here is a scientific paper:\n"
        "\n"
        "{text}\n"
        "\n"
        "Given the provided scientific paper, please complete the following two steps:\n"
        "\n"
        "Step 1: Keyword Extraction\n"
        "\n"
        "Read the scientific paper and identify 15 keywords that capture the most important "
        "terms and concepts in the paper, avoiding generic or broad terms. Compile the selected "
        "keywords into a list.\n"
        "\n"
        "Step 2: Question-Answer Generation\n"
        "\n"
        "Generate 10 scientific question-answer pairs as diverse as possible based on facts and "
        "knowledge presented in the given paper, focusing on keywords you generated. Keep the "
        "following requirements in mind: Avoid asking simple or definitional questions. Assume "
        "that the reader does not have access to the original paper or any external sources, so "
        "ensure that the questions and answers are self-contained and do not rely on references "
        "to figures, tables, or other parts of the paper. Incorporate specific data and insights "
        "from the paper to provide detailed and informative answers. Keep the answers concise, "
        "accurate, and directly related to the corresponding questions.\n"
        "\n"
        "Please present the generated keywords and question-answer pairs in the following "
        "format:\n"
        "\n"
        "Keywords: [keyword 1], [keyword 2], ..., [keyword15]\n"
        "\n"
        "Q1: [Question 1]\n"
        "\n"
        "A1: [Answer 1]\n"
        "\n"
        "Q2: [Question 2]\n"
        "\n"
        "A2: [Answer 2]\n"
        "\n"
        "...\n"
        "\n"
        "Q10: [Question 10]\n"
        "\n"
        "A10: [Answer 10]";
    return tmpl;
}

GenerationPrompt build_prompt(const std::string& paper_text) {
    if (paper_text.empty()) throw ConfigError("build_prompt: paper text is empty");
    const std::string& tmpl = generation_prompt_template();
    const size_t site = tmpl.find("{text}");
    GenerationPrompt prompt;
    prompt.paper_text = paper_text;
    prompt.rendered = tmpl.substr(0, site) + paper_text + tmpl.substr(site + 6);
    return prompt;
}

namespace {

struct Marker {
    enum Kind { Keywords, Question, Answer } kind;
    int index = 0;       // for Q/A
    std::string rest;    // text after the colon
};

// Recognizes "Keywords:", "Q3:", "A10:" style line heads, tolerating spaces
// before the colon and mixed case.
std::optional<Marker> match_marker(std::string_view line) {
    const std::string_view t = trim_view(line);
    if (t.empty()) return std::nullopt;

    auto after_colon = [&](size_t pos) -> std::optional<size_t> {
        while (pos < t.size() && (t[pos] == ' ' || t[pos] == '\t')) ++pos;
        if (pos < t.size() && t[pos] == ':') return pos + 1;
        return std::nullopt;
    };

    const std::string lowered = to_lower_ascii(t.substr(0, 8));
    if (starts_with(lowered, "keywords")) {
        if (const auto body = after_colon(8))
            return Marker{Marker::Keywords, 0, trim(t.substr(*body))};
    }
    const char head = static_cast<char>(std::tolower(static_cast<unsigned char>(t[0])));
    if (head == 'q' || head == 'a') {
        size_t pos = 1;
        int index = 0;
        size_t digits = 0;
        while (pos < t.size() && std::isdigit(static_cast<unsigned char>(t[pos])) && digits < 3) {
            index = index * 10 + (t[pos] - '0');
            ++pos;
            ++digits;
        }
        if (digits >= 1) {
            if (const auto body = after_colon(pos))
                return Marker{head == 'q' ? Marker::Question : Marker::Answer, index,
                              trim(t.substr(*body))};
        }
    }
    return std::nullopt;
}

void append_text(std::string& dst, std::string_view more) {
    const std::string_view t = trim_view(more);
    if (t.empty()) return;
    if (!dst.empty()) dst += ' ';
    dst += t;
}

std::vector<std::string> split_keywords(const std::string& text) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= text.size()) {
        size_t comma = text.find(',', start);
        if (comma == std::string::npos) comma = text.size();
        std::string item = trim(text.substr(start, comma - start));
        if (!item.empty() && item.front() == '[') item.erase(item.begin());
        if (!item.empty() && item.back() == ']') item.pop_back();
        item = trim(item);
        if (!item.empty()) out.push_back(std::move(item));
        if (comma == text.size()) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

QaParse parse_generator_output(const std::string& text, const std::string& source_id) {
    QaParse result;
    std::map<int, std::string> questions;
    std::map<int, std::string> answers;
    bool keywords_seen = false;
    std::string keywords_text;

    // Current accumulation target for continuation lines.
    std::string* current = nullptr;

    for (const auto& line : split_lines(text)) {
        const auto marker = match_marker(line);
        if (!marker) {
            if (current) append_text(*current, line);
            continue;
        }
        switch (marker->kind) {
            case Marker::Keywords:
                if (keywords_seen) {
                    result.warnings.push_back("duplicate Keywords line ignored");
                    current = nullptr;
                    break;
                }
                keywords_seen = true;
                keywords_text = marker->rest;
                current = &keywords_text;
                break;
            case Marker::Question:
            case Marker::Answer: {
                const bool is_q = marker->kind == Marker::Question;
                const char* what = is_q ? "Q" : "A";
                if (marker->index < 1 || marker->index > 10) {
                    result.warnings.push_back(std::string(what) +
                                              std::to_string(marker->index) +
                                              ": index outside 1-10, ignored");
                    current = nullptr;
                    break;
                }
                auto& slot = is_q ? questions : answers;
                if (slot.count(marker->index)) {
                    result.warnings.push_back("duplicate " + std::string(what) +
                                              std::to_string(marker->index) +
                                              ", first kept");
                    current = nullptr;
                    break;
                }
                slot[marker->index] = marker->rest;
                current = &slot[marker->index];
                break;
            }
        }
    }

    if (keywords_seen) {
        result.keywords = split_keywords(keywords_text);
        if (result.keywords.size() != 15)
            result.warnings.push_back("keyword count " + std::to_string(result.keywords.size()) +
                                      " (expected 15)");
    }

    for (const auto& [index, question] : questions) {
        const auto a = answers.find(index);
        if (a == answers.end()) {
            result.warnings.push_back("Q" + std::to_string(index) + " has no matching answer");
            continue;
        }
        if (question.empty() || a->second.empty()) {
            result.warnings.push_back("pair " + std::to_string(index) +
                                      " has an empty question or answer, dropped");
            continue;
        }
        QAPair pair;
        pair.index = index;
        pair.question = question;
        pair.answer = a->second;
        pair.keywords = result.keywords;
        pair.source_id = source_id;
        result.pairs.push_back(std::move(pair));
    }
    for (const auto& [index, answer] : answers) {
        (void)answer;
        if (!questions.count(index))
            result.warnings.push_back("A" + std::to_string(index) + " has no matching question");
    }

    if (!keywords_seen && result.pairs.empty())
        throw DataError("unparseable generator output: no Keywords line and no QA pairs");
    return result;
}

FilterResult filter_self_referential(const std::vector<QAPair>& pairs) {
    FilterResult result;
    for (const auto& p : pairs) {
        const bool hit = contains_ci(p.question, "this paper") ||
                         contains_ci(p.question, "this study") ||
                         contains_ci(p.answer, "this paper") ||
                         contains_ci(p.answer, "this study");
        if (hit)
            ++result.removed;
        else
            result.kept.push_back(p);
    }
    return result;
}

std::vector<InstructionRecord> qa_to_instructions(const std::vector<QAPair>& pairs) {
    std::vector<InstructionRecord> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        InstructionRecord rec;
        rec.instruction = p.question;
        rec.input = "";
        rec.output = p.answer;
        rec.meta.origin = Origin::Qa;
        rec.meta.source_dataset = p.source_id;
        rec.meta.source_row = "Q" + std::to_string(p.index);
        out.push_back(std::move(rec));
    }
    return out;
}

MixResult mix_with_general(const std::vector<InstructionRecord>& science,
                           const std::vector<InstructionRecord>& general, RngStream& rng) {
    MixResult result;
    result.records = science;
    if (general.size() > science.size()) {
        const auto keep = rng.sample_indices(general.size(), science.size());
        for (size_t i : keep) result.records.push_back(general[i]);
    } else {
        if (general.size() < science.size())
            result.warnings.push_back("general pool smaller than science pool (" +
                                      std::to_string(general.size()) + " < " +
                                      std::to_string(science.size()) + "); using all of it");
        result.records.insert(result.records.end(), general.begin(), general.end());
    }
    rng.shuffle(result.records);
    return result;
}

}  // namespace matlift
