#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "xrm/errors.hpp"
#include "xrm/unicode.hpp"
#include "xrm/vocab_lang.hpp"

namespace fs = std::filesystem;
using namespace xrm;

namespace {

ClassificationRules script_rules() {
  ClassificationRules r;
  r.script_map = {{"Hangul", "ko"}, {"Latin", "en"}, {"Han", "zh"}};
  r.detok_markers = {"▁", "Ġ", "##"};
  return r;
}

ClassificationRules lexicon_rules() {
  ClassificationRules r;
  r.mode = PartitionMode::lexicon;
  r.lexicons = {{"en", {"the", "house"}}, {"it", {"the", "casa", "gatto"}}, {"es", {"casa", "perro"}}};
  r.detok_markers = {"▁"};
  return r;
}

fs::path fixture(const std::string& rel) { return fs::path(XRM_DATA_DIR) / "fixtures" / "vocab" / rel; }

}  // namespace

TEST(Unicode, Scripts) {
  EXPECT_EQ(unicode::letter_script(U'a'), "Latin");
  EXPECT_EQ(unicode::letter_script(U'é'), "Latin");
  EXPECT_EQ(unicode::letter_script(U'한'), "Hangul");
  EXPECT_EQ(unicode::letter_script(U'中'), "Han");
  EXPECT_EQ(unicode::letter_script(U'ж'), "Cyrillic");
  EXPECT_EQ(unicode::letter_script(U'7'), "");
  EXPECT_EQ(unicode::letter_script(U'×'), "");
  EXPECT_EQ(unicode::to_lower(U'Ÿ'), U'ÿ');
  EXPECT_EQ(unicode::to_lower(U'Д'), U'д');
}

TEST(Unicode, RejectsMalformedUtf8) {
  EXPECT_FALSE(unicode::decode_utf8("\xC0\xAF"));      // overlong
  EXPECT_FALSE(unicode::decode_utf8("\xED\xA0\x80"));  // surrogate
  EXPECT_FALSE(unicode::decode_utf8("\xE4\xB8"));      // truncated
  const auto ok = unicode::decode_utf8("a한");
  ASSERT_TRUE(ok);
  EXPECT_EQ(unicode::encode_utf8(*ok), "a한");
}

TEST(Classify, SingleScriptTokens) {
  const auto r = script_rules();
  EXPECT_EQ(classify_token("한국", r), "ko");
  EXPECT_EQ(classify_token("中国", r), "zh");
  EXPECT_EQ(classify_token("▁the", r), "en");
}

TEST(Classify, UnassignedTokens) {
  const auto r = script_rules();
  EXPECT_EQ(classify_token("7", r), std::nullopt);
  EXPECT_EQ(classify_token("abc中", r), std::nullopt);  // mixed scripts
  EXPECT_EQ(classify_token("<0xE4>", r), std::nullopt);  // byte fallback
  EXPECT_EQ(classify_token("<s>", r), std::nullopt);
  EXPECT_EQ(classify_token("▁", r), std::nullopt);
  EXPECT_EQ(classify_token("привет", r), std::nullopt);  // unmapped script
  EXPECT_EQ(classify_token("\xff\xfe", r), std::nullopt);
}

TEST(Classify, MarkersAreTransparent) {
  const auto r = script_rules();
  for (const std::string t : {"한", "a", "中", "7", "ab中", "语言"}) {
    for (const auto& m : r.detok_markers) EXPECT_EQ(classify_token(m + t, r), classify_token(t, r)) << m + t;
  }
}

TEST(Classify, MinLetters) {
  auto r = script_rules();
  r.min_letters = 2;
  EXPECT_EQ(classify_token("a", r), std::nullopt);
  EXPECT_EQ(classify_token("a1b", r), "en");
}

TEST(Classify, LexiconAmbiguityIsUnassigned) {
  const auto r = lexicon_rules();
  EXPECT_EQ(classify_token("the", r), std::nullopt);
  EXPECT_EQ(classify_token("▁House", r), "en");
  EXPECT_EQ(classify_token("gatto", r), "it");
  EXPECT_EQ(classify_token("casa", r), std::nullopt);
  EXPECT_EQ(classify_token("zebra", r), std::nullopt);
}

TEST(Partition, WorkedExample) {
  auto r = script_rules();
  const auto p = partition_vocab({"한", "a", "中", "7"}, r);
  EXPECT_EQ(p.assignments.at("ko"), std::vector<std::size_t>{0});
  EXPECT_EQ(p.assignments.at("en"), std::vector<std::size_t>{1});
  EXPECT_EQ(p.assignments.at("zh"), std::vector<std::size_t>{2});
  EXPECT_EQ(p.unassigned, std::vector<std::size_t>{3});
  EXPECT_TRUE(p.empty_languages().empty());
  EXPECT_NO_THROW(p.validate());
}

TEST(Partition, SingleScriptFlagsOthers) {
  const auto p = partition_vocab({"a", "bc", "d"}, script_rules());
  EXPECT_EQ(p.count("en"), 3u);
  EXPECT_EQ(p.empty_languages(), (std::vector<std::string>{"ko", "zh"}));
}

TEST(Partition, EmptyVocabularyRefused) {
  EXPECT_THROW(partition_vocab({}, script_rules()), ValidationError);
}

TEST(Partition, MatchesPerTokenReclassification) {
  std::mt19937_64 rng(1);
  const std::vector<std::string> pieces = {"a", "Z", "é", "한", "국", "中", "文", "7", "!", "▁", "##", "ж", "<", ">"};
  std::vector<std::string> tokens;
  for (int i = 0; i < 3000; ++i) {
    std::string t;
    for (int k = 0, n = 1 + static_cast<int>(rng() % 4); k < n; ++k) t += pieces[rng() % pieces.size()];
    tokens.push_back(t);
  }
  const auto rules = script_rules();
  const auto p = partition_vocab(tokens, rules);
  EXPECT_NO_THROW(p.validate());
  std::map<std::string, std::vector<std::size_t>> expect;
  std::vector<std::size_t> unassigned;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (auto l = classify_token(tokens[i], rules)) {
      expect[*l].push_back(i);
    } else {
      unassigned.push_back(i);
    }
  }
  for (const auto& [lang, ids] : expect) EXPECT_EQ(p.assignments.at(lang), ids) << lang;
  EXPECT_EQ(p.unassigned, unassigned);

  std::size_t covered = p.unassigned.size();
  for (const auto& [lang, ids] : p.assignments) covered += ids.size();
  EXPECT_EQ(covered, tokens.size());
}

TEST(Partition, RuleMapOrderDoesNotMatter) {
  auto a = script_rules();
  ClassificationRules b = a;
  b.script_map.clear();
  b.script_map.emplace("Han", "zh");
  b.script_map.emplace("Latin", "en");
  b.script_map.emplace("Hangul", "ko");
  const std::vector<std::string> tokens = {"한", "a", "中", "7", "ab", "语言"};
  EXPECT_EQ(partition_vocab(tokens, a).assignments, partition_vocab(tokens, b).assignments);
}

TEST(Rules, ValidateRefusesBadConfigs) {
  auto r = script_rules();
  r.script_map["Klingon"] = "tlh";
  EXPECT_THROW(r.validate(), ValidationError);
  auto l = lexicon_rules();
  l.lexicons["ko"] = {};
  EXPECT_THROW(l.validate(), ValidationError);
  auto m = script_rules();
  m.min_letters = 0;
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(Rules, LoadBundledRules) {
  const auto s = load_rules(fixture("rules_script.json"));
  EXPECT_EQ(s.mode, PartitionMode::script);
  EXPECT_EQ(s.script_map.at("Hangul"), "ko");
  const auto l = load_rules(fixture("rules_lexicon.json"));
  EXPECT_EQ(l.mode, PartitionMode::lexicon);
  EXPECT_EQ(l.languages(), (std::vector<std::string>{"en", "es", "it"}));
  EXPECT_TRUE(l.lexicons.at("es").count("perro"));

  const auto tokens = load_vocab(fixture("vocab.json"));
  const auto p = partition_vocab(tokens, l);
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.count("es"), 4u);  // perro, que, el, los; casa, la and con are shared with it
}

TEST(Rules, MalformedRulesFile) {
  const auto path = fs::temp_directory_path() / ("xrm_rules_" + std::to_string(::getpid()) + ".json");
  std::ofstream(path) << "{\"mode\": \"phonetic\"}";
  EXPECT_THROW(load_rules(path), Error);
  std::ofstream(path) << "not json";
  EXPECT_THROW(load_rules(path), Error);
  fs::remove(path);
  EXPECT_THROW(load_rules("/nonexistent/rules.json"), IoError);
}
