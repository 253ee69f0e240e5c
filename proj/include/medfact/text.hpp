#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace medfact {

// Collapses every run of ASCII whitespace to one space and strips both ends.
std::string normalize_whitespace(std::string_view text);

std::string to_lower_ascii(std::string_view text);

std::string_view trim(std::string_view text);

// Whitespace-delimited words.
std::vector<std::string> split_words(std::string_view text);

// Lowercased terms split on anything that is not an ASCII letter or digit.
// Bytes >= 0x80 are kept inside terms so UTF-8 words survive intact.
std::vector<std::string> tokenize_terms(std::string_view text);

std::vector<std::string_view> split_lines(std::string_view text);

}  // namespace medfact
