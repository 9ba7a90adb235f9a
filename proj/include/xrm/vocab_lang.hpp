#pragma once

// Splits a tokenizer vocabulary into disjoint per-language token-index sets.
//
// Script mode assigns a token to a language when all of its letters belong
// to one Unicode script and that script is mapped. Latin-script languages
// cannot be told apart this way; lexicon mode handles them by assigning a
// token only when its normalized form occurs in exactly one language's
// word list.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace xrm {

enum class PartitionMode { script, lexicon };

std::string_view to_string(PartitionMode m);

struct ClassificationRules {
  PartitionMode mode = PartitionMode::script;
  // Unicode script name -> language code.
  std::map<std::string, std::string> script_map;
  // Language code -> normalized words (lexicon mode).
  std::map<std::string, std::set<std::string>> lexicons;
  // Word-boundary glyphs of subword tokenizers, stripped from the front.
  std::vector<std::string> detok_markers;
  int min_letters = 1;

  // Latin->en, Han->zh, Hangul->ko with SentencePiece, byte-level BPE and
  // WordPiece markers.
  static ClassificationRules defaults();

  // Throws ValidationError for unknown scripts, empty lexicons in lexicon
  // mode, or min_letters < 1.
  void validate() const;

  // Languages in scope, sorted.
  std::vector<std::string> languages() const;
};

// Loads {"mode", "script_map", "lexicons": {lang: path}, "detok_markers",
// "min_letters"}. Missing keys fall back to defaults(); lexicon paths are
// resolved against the config file's directory.
ClassificationRules load_rules(const std::filesystem::path& path);

// One word per line, UTF-8; blank lines skipped; words normalized.
std::set<std::string> load_lexicon(const std::filesystem::path& path);

// Strips leading detok markers and lowercases.
std::string normalize_token(std::string_view token, const ClassificationRules& rules);

// Returns the language code, or nullopt for unassigned tokens.
std::optional<std::string> classify_token(std::string_view token,
                                          const ClassificationRules& rules);

struct VocabPartition {
  std::size_t vocab_size = 0;
  PartitionMode mode = PartitionMode::script;
  std::vector<std::string> languages;
  // Sorted token indices per language.
  std::map<std::string, std::vector<std::size_t>> assignments;
  std::vector<std::size_t> unassigned;

  std::size_t count(const std::string& language) const;
  // Languages in scope whose set came out empty.
  std::vector<std::string> empty_languages() const;
  // Disjointness and coverage; throws ValidationError.
  void validate() const;
};

// Throws ValidationError on an empty token list.
VocabPartition partition_vocab(const std::vector<std::string>& tokens,
                               const ClassificationRules& rules);

// {"tokens": [...]} with position = token index.
std::vector<std::string> load_vocab(const std::filesystem::path& path);

}  // namespace xrm
