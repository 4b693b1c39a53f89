#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace matlift {

inline std::string_view trim_view(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::string trim(std::string_view s) { return std::string(trim_view(s)); }

inline std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

// Case-insensitive (ASCII) substring search; npos when absent.
inline size_t find_ci(std::string_view haystack, std::string_view needle, size_t from = 0) {
    if (needle.empty() || haystack.size() < needle.size()) return std::string_view::npos;
    const std::string h = to_lower_ascii(haystack);
    const std::string n = to_lower_ascii(needle);
    const size_t pos = h.find(n, from);
    return pos;
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
    return find_ci(haystack, needle) != std::string_view::npos;
}

inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    size_t start = 0;
    while (start <= text.size()) {
        size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(text.substr(start));
            break;
        }
        std::string_view line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = nl + 1;
    }
    return lines;
}

// Length of a decimal-number token starting at s[0]:
// [+-]? (digits [. digits*] | . digits) ([eE][+-]?digits)?  Zero when none.
inline size_t decimal_token_length(std::string_view s) {
    size_t i = 0;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
    size_t int_digits = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) { ++i; ++int_digits; }
    size_t frac_digits = 0;
    if (i < s.size() && s[i] == '.') {
        size_t j = i + 1;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) { ++j; ++frac_digits; }
        if (frac_digits > 0 || int_digits > 0) i = j;
    }
    if (int_digits == 0 && frac_digits == 0) return 0;
    if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        size_t j = i + 1;
        if (j < s.size() && (s[j] == '+' || s[j] == '-')) ++j;
        size_t exp_digits = 0;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) { ++j; ++exp_digits; }
        if (exp_digits > 0) i = j;
    }
    return i;
}

// Full-string decimal parse; rejects inf/nan/hex and partial matches.
inline std::optional<double> parse_decimal(std::string_view s) {
    if (s.empty() || decimal_token_length(s) != s.size()) return std::nullopt;
    std::string buf(s);
    char* end = nullptr;
    const double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size()) return std::nullopt;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
}

struct NumberSpan {
    size_t pos = 0;
    size_t len = 0;
    double value = 0.0;
};

// First maximal decimal-number substring of free text, if any.
inline std::optional<NumberSpan> find_first_number(std::string_view text) {
    for (size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.'))
            continue;
        const size_t len = decimal_token_length(text.substr(i));
        if (len == 0) continue;
        const auto v = parse_decimal(text.substr(i, len));
        if (!v) continue;
        return NumberSpan{i, len, *v};
    }
    return std::nullopt;
}

}  // namespace matlift
