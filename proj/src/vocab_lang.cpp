#include "xrm/vocab_lang.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "xrm/errors.hpp"
#include "xrm/parallel.hpp"
#include "xrm/unicode.hpp"

namespace xrm {
namespace {

using nlohmann::json;

std::string_view strip_markers(std::string_view token, const std::vector<std::string>& markers) {
  bool stripped = true;
  while (stripped && !token.empty()) {
    stripped = false;
    for (const auto& m : markers) {
      if (!m.empty() && token.starts_with(m)) {
        token.remove_prefix(m.size());
        stripped = true;
        break;
      }
    }
  }
  return token;
}

// Special and byte-fallback tokens: <s>, <|endoftext|>, <0x0A>.
bool is_control_token(std::string_view token) {
  return token.size() >= 3 && token.front() == '<' && token.back() == '>';
}

std::optional<std::string> classify_by_script(std::string_view token,
                                              const ClassificationRules& rules) {
  const auto stripped = strip_markers(token, rules.detok_markers);
  if (stripped.empty() || is_control_token(stripped)) return std::nullopt;
  const auto cps = unicode::decode_utf8(stripped);
  if (!cps) return std::nullopt;
  int letters = 0;
  std::string_view script;
  for (char32_t cp : *cps) {
    const auto s = unicode::letter_script(cp);
    if (s.empty()) continue;
    if (!script.empty() && s != script) return std::nullopt;
    script = s;
    ++letters;
  }
  if (letters < rules.min_letters || script.empty()) return std::nullopt;
  auto it = rules.script_map.find(std::string(script));
  if (it == rules.script_map.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> classify_by_lexicon(std::string_view token,
                                               const ClassificationRules& rules) {
  const std::string word = normalize_token(token, rules);
  if (word.empty()) return std::nullopt;
  const std::string* match = nullptr;
  for (const auto& [language, words] : rules.lexicons) {
    if (words.contains(word)) {
      if (match) return std::nullopt;
      match = &language;
    }
  }
  if (!match) return std::nullopt;
  return *match;
}

}  // namespace

std::string_view to_string(PartitionMode m) {
  return m == PartitionMode::script ? "script" : "lexicon";
}

ClassificationRules ClassificationRules::defaults() {
  ClassificationRules r;
  r.script_map = {{"Latin", "en"}, {"Han", "zh"}, {"Hangul", "ko"}};
  r.detok_markers = {"▁", "Ġ", "##"};
  return r;
}

void ClassificationRules::validate() const {
  if (min_letters < 1) throw ValidationError("min_letters must be at least 1");
  if (mode == PartitionMode::script) {
    const auto& known = unicode::known_scripts();
    for (const auto& [script, language] : script_map) {
      if (std::find(known.begin(), known.end(), script) == known.end()) {
        throw ValidationError("unknown Unicode script '" + script + "'");
      }
      if (language.empty()) throw ValidationError("script '" + script + "' maps to an empty language");
    }
    if (script_map.empty()) throw ValidationError("script mode needs a non-empty script_map");
  } else {
    if (lexicons.empty()) throw ValidationError("lexicon mode needs at least one lexicon");
    for (const auto& [language, words] : lexicons) {
      if (words.empty()) throw ValidationError("lexicon for '" + language + "' is empty");
    }
  }
}

std::vector<std::string> ClassificationRules::languages() const {
  std::set<std::string> out;
  if (mode == PartitionMode::script) {
    for (const auto& [script, language] : script_map) out.insert(language);
  } else {
    for (const auto& [language, words] : lexicons) out.insert(language);
  }
  return {out.begin(), out.end()};
}

std::string normalize_token(std::string_view token, const ClassificationRules& rules) {
  const auto stripped = strip_markers(token, rules.detok_markers);
  auto cps = unicode::decode_utf8(stripped);
  if (!cps) return std::string(stripped);
  for (auto& cp : *cps) cp = unicode::to_lower(cp);
  return unicode::encode_utf8(*cps);
}

std::optional<std::string> classify_token(std::string_view token, const ClassificationRules& rules) {
  return rules.mode == PartitionMode::script ? classify_by_script(token, rules)
                                             : classify_by_lexicon(token, rules);
}

std::size_t VocabPartition::count(const std::string& language) const {
  auto it = assignments.find(language);
  return it == assignments.end() ? 0 : it->second.size();
}

std::vector<std::string> VocabPartition::empty_languages() const {
  std::vector<std::string> out;
  for (const auto& l : languages) {
    if (count(l) == 0) out.push_back(l);
  }
  return out;
}

void VocabPartition::validate() const {
  std::vector<int> owner(vocab_size, 0);
  auto mark = [&](std::size_t idx, const std::string& where) {
    if (idx >= vocab_size) throw ValidationError(where + " holds out-of-range token " + std::to_string(idx));
    if (owner[idx]++ != 0) throw ValidationError("token " + std::to_string(idx) + " assigned twice");
  };
  for (const auto& [language, indices] : assignments) {
    for (std::size_t idx : indices) mark(idx, language);
  }
  for (std::size_t idx : unassigned) mark(idx, "unassigned");
  for (std::size_t i = 0; i < vocab_size; ++i) {
    if (owner[i] == 0) throw ValidationError("token " + std::to_string(i) + " not covered");
  }
}

VocabPartition partition_vocab(const std::vector<std::string>& tokens, const ClassificationRules& rules) {
  if (tokens.empty()) throw ValidationError("empty token list");
  rules.validate();

  std::vector<std::optional<std::string>> labels(tokens.size());
  parallel_for(tokens.size(), [&](std::size_t i) { labels[i] = classify_token(tokens[i], rules); });

  VocabPartition p;
  p.vocab_size = tokens.size();
  p.mode = rules.mode;
  p.languages = rules.languages();
  for (const auto& l : p.languages) p.assignments[l];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) {
      p.assignments[*labels[i]].push_back(i);
    } else {
      p.unassigned.push_back(i);
    }
  }
  return p;
}

std::set<std::string> load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon '" + path.string() + "'");
  ClassificationRules plain;
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    words.insert(normalize_token(std::string_view(line).substr(start), plain));
  }
  return words;
}

ClassificationRules load_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rules '" + path.string() + "'");
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("rules file '" + path.string() + "': " + e.what());
  }
  if (!cfg.is_object()) throw ValidationError("rules file must hold a JSON object");

  ClassificationRules rules = ClassificationRules::defaults();
  try {
    if (cfg.contains("mode")) {
      const auto mode = cfg.at("mode").get<std::string>();
      if (mode == "script") {
        rules.mode = PartitionMode::script;
      } else if (mode == "lexicon") {
        rules.mode = PartitionMode::lexicon;
      } else {
        throw ValidationError("unknown mode '" + mode + "'");
      }
    }
    if (cfg.contains("script_map")) {
      rules.script_map = cfg.at("script_map").get<std::map<std::string, std::string>>();
    }
    if (cfg.contains("detok_markers")) {
      rules.detok_markers = cfg.at("detok_markers").get<std::vector<std::string>>();
    }
    if (cfg.contains("min_letters")) rules.min_letters = cfg.at("min_letters").get<int>();
    if (cfg.contains("lexicons")) {
      const auto base = path.parent_path();
      for (const auto& [language, source] : cfg.at("lexicons").items()) {
        if (source.is_string()) {
          rules.lexicons[language] = load_lexicon(base / source.get<std::string>());
        } else {
          auto& words = rules.lexicons[language];
          for (const auto& w : source) words.insert(normalize_token(w.get<std::string>(), rules));
        }
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError("rules file '" + path.string() + "': " + e.what());
  }
  rules.validate();
  return rules;
}

std::vector<std::string> load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary '" + path.string() + "'");
  try {
    const json doc = json::parse(in);
    return doc.at("tokens").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError("vocabulary file '" + path.string() + "': " + e.what());
  }
}

}  // namespace xrm
