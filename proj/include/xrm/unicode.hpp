#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xrm::unicode {

// Decodes UTF-8; returns nullopt on any malformed or overlong sequence.
std::optional<std::vector<char32_t>> decode_utf8(std::string_view text);
std::string encode_utf8(const std::vector<char32_t>& code_points);

// Script of a letter code point ("Latin", "Hangul", "Han", ...), or an empty
// view for anything that is not a letter in a covered script (digits,
// punctuation, symbols, combining marks).
std::string_view letter_script(char32_t cp);

// Recognised script names, for validating configuration.
const std::vector<std::string_view>& known_scripts();

// Simple case folding for Latin, Greek and Cyrillic letters.
char32_t to_lower(char32_t cp);

}  // namespace xrm::unicode
