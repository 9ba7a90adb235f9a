#include "xrm/unicode.hpp"

#include <algorithm>
#include <array>

namespace xrm::unicode {
namespace {

struct ScriptRange {
  char32_t lo;
  char32_t hi;
  std::string_view script;
};

// Letter ranges only, sorted by lo, non-overlapping.
constexpr std::array kLetterRanges = {
    ScriptRange{0x0041, 0x005A, "Latin"},
    ScriptRange{0x0061, 0x007A, "Latin"},
    ScriptRange{0x00AA, 0x00AA, "Latin"},
    ScriptRange{0x00BA, 0x00BA, "Latin"},
    ScriptRange{0x00C0, 0x00D6, "Latin"},
    ScriptRange{0x00D8, 0x00F6, "Latin"},
    ScriptRange{0x00F8, 0x02AF, "Latin"},
    ScriptRange{0x0370, 0x0373, "Greek"},
    ScriptRange{0x0376, 0x0377, "Greek"},
    ScriptRange{0x037B, 0x037D, "Greek"},
    ScriptRange{0x037F, 0x037F, "Greek"},
    ScriptRange{0x0386, 0x0386, "Greek"},
    ScriptRange{0x0388, 0x03FF, "Greek"},
    ScriptRange{0x0400, 0x0481, "Cyrillic"},
    ScriptRange{0x048A, 0x052F, "Cyrillic"},
    ScriptRange{0x0531, 0x0556, "Armenian"},
    ScriptRange{0x0560, 0x0588, "Armenian"},
    ScriptRange{0x05D0, 0x05EA, "Hebrew"},
    ScriptRange{0x05EF, 0x05F2, "Hebrew"},
    ScriptRange{0x0620, 0x064A, "Arabic"},
    ScriptRange{0x066E, 0x066F, "Arabic"},
    ScriptRange{0x0671, 0x06D3, "Arabic"},
    ScriptRange{0x06D5, 0x06D5, "Arabic"},
    ScriptRange{0x06FA, 0x06FC, "Arabic"},
    ScriptRange{0x0904, 0x0939, "Devanagari"},
    ScriptRange{0x093D, 0x093D, "Devanagari"},
    ScriptRange{0x0950, 0x0950, "Devanagari"},
    ScriptRange{0x0958, 0x0961, "Devanagari"},
    ScriptRange{0x0971, 0x097F, "Devanagari"},
    ScriptRange{0x0985, 0x09B9, "Bengali"},
    ScriptRange{0x0B85, 0x0BB9, "Tamil"},
    ScriptRange{0x0E01, 0x0E30, "Thai"},
    ScriptRange{0x0E32, 0x0E33, "Thai"},
    ScriptRange{0x0E40, 0x0E46, "Thai"},
    ScriptRange{0x10A0, 0x10FF, "Georgian"},
    ScriptRange{0x1100, 0x11FF, "Hangul"},
    ScriptRange{0x1E00, 0x1EFF, "Latin"},
    ScriptRange{0x1F00, 0x1FBC, "Greek"},
    ScriptRange{0x1FC2, 0x1FCC, "Greek"},
    ScriptRange{0x1FD0, 0x1FDB, "Greek"},
    ScriptRange{0x1FE0, 0x1FEC, "Greek"},
    ScriptRange{0x1FF2, 0x1FFC, "Greek"},
    ScriptRange{0x2C60, 0x2C7F, "Latin"},
    ScriptRange{0x2E80, 0x2FDF, "Han"},
    ScriptRange{0x3005, 0x3005, "Han"},
    ScriptRange{0x3007, 0x3007, "Han"},
    ScriptRange{0x3021, 0x3029, "Han"},
    ScriptRange{0x3038, 0x303B, "Han"},
    ScriptRange{0x3041, 0x3096, "Hiragana"},
    ScriptRange{0x309D, 0x309F, "Hiragana"},
    ScriptRange{0x30A1, 0x30FA, "Katakana"},
    ScriptRange{0x30FD, 0x30FF, "Katakana"},
    ScriptRange{0x3131, 0x318E, "Hangul"},
    ScriptRange{0x31F0, 0x31FF, "Katakana"},
    ScriptRange{0x3400, 0x4DBF, "Han"},
    ScriptRange{0x4E00, 0x9FFF, "Han"},
    ScriptRange{0xA720, 0xA7FF, "Latin"},
    ScriptRange{0xA960, 0xA97C, "Hangul"},
    ScriptRange{0xAC00, 0xD7A3, "Hangul"},
    ScriptRange{0xD7B0, 0xD7FB, "Hangul"},
    ScriptRange{0xF900, 0xFAFF, "Han"},
    ScriptRange{0xFB00, 0xFB06, "Latin"},
    ScriptRange{0xFF21, 0xFF3A, "Latin"},
    ScriptRange{0xFF41, 0xFF5A, "Latin"},
    ScriptRange{0xFF66, 0xFF9D, "Katakana"},
    ScriptRange{0xFFA0, 0xFFDC, "Hangul"},
    ScriptRange{0x20000, 0x2FA1F, "Han"},
    ScriptRange{0x30000, 0x3134F, "Han"},
};

}  // namespace

std::optional<std::vector<char32_t>> decode_utf8(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    int len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      return std::nullopt;
    }
    if (i + len > text.size()) return std::nullopt;
    for (int k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) return std::nullopt;
      cp = (cp << 6) | (b & 0x3F);
    }
    constexpr char32_t kMinForLength[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMinForLength[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return std::nullopt;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string encode_utf8(const std::vector<char32_t>& code_points) {
  std::string out;
  for (char32_t cp : code_points) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::string_view letter_script(char32_t cp) {
  auto it = std::upper_bound(kLetterRanges.begin(), kLetterRanges.end(), cp,
                             [](char32_t v, const ScriptRange& r) { return v < r.lo; });
  if (it == kLetterRanges.begin()) return {};
  --it;
  if (cp > it->hi) return {};
  // Latin-1 multiplication and division signs sit inside the letter block.
  if (cp == 0x00D7 || cp == 0x00F7) return {};
  return it->script;
}

const std::vector<std::string_view>& known_scripts() {
  static const std::vector<std::string_view> scripts = [] {
    std::vector<std::string_view> s;
    for (const auto& r : kLetterRanges) {
      if (std::find(s.begin(), s.end(), r.script) == s.end()) s.push_back(r.script);
    }
    std::sort(s.begin(), s.end());
    return s;
  }();
  return scripts;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return cp + 32;
  if (cp == 0x0178) return 0x00FF;
  if (cp >= 0x0100 && cp <= 0x017E && cp != 0x0130 && cp != 0x0138 && cp != 0x0149) {
    // Latin Extended-A alternates upper/lower, with an odd-aligned stretch.
    const bool odd_block = (cp >= 0x0139 && cp <= 0x0148) || (cp >= 0x0179 && cp <= 0x017E);
    if (odd_block) return (cp % 2 == 1) ? cp + 1 : cp;
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x0391 && cp <= 0x03AB && cp != 0x03A2) return cp + 32;
  if (cp >= 0x0410 && cp <= 0x042F) return cp + 32;
  if (cp >= 0x0400 && cp <= 0x040F) return cp + 80;
  if (cp >= 0xFF21 && cp <= 0xFF3A) return cp + 32;
  return cp;
}

}  // namespace xrm::unicode
