#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace matlift {

// Comma-separated, first row headers, UTF-8. Quoted fields may contain
// commas, doubled quotes, and newlines.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    bool has_column(std::string_view name) const;
    // Index of a header column; throws DataError when absent.
    size_t column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

// Quotes a field only when needed (comma, quote, or newline present).
std::string csv_escape(const std::string& field);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace matlift
