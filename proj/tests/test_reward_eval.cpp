#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "xrm/errors.hpp"
#include "xrm/log.hpp"
#include "xrm/reward_eval.hpp"

using namespace xrm;

namespace {

struct Quiet {
  LogSink prev = set_log_sink([](std::string_view) {});
  ~Quiet() { set_log_sink(prev); }
};

std::vector<RewardRecord> rewards_for(const std::vector<std::pair<double, double>>& values,
                                      std::vector<PreferencePair>& pairs, Category cat = Category::chat) {
  std::vector<RewardRecord> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::string id = "p" + std::to_string(i);
    pairs.push_back({id, "q", "good " + id, "bad " + id, cat, "es", 0});
    out.push_back({id, "chosen", values[i].first, std::nullopt, "m", 0});
    out.push_back({id, "rejected", values[i].second, std::nullopt, "m", 0});
  }
  return out;
}

BenchResult bench(std::map<Category, std::size_t> correct_per_mille, const std::string& model) {
  BenchResult r;
  r.model_name = model;
  r.language = "es";
  for (auto [c, n] : correct_per_mille) r.per_category[c] = {static_cast<double>(n), 1000, 0.0};
  r.finalize();
  return r;
}

}  // namespace

TEST(BtLoss, KnownValues) {
  EXPECT_NEAR(bt_loss(0.0, 0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(bt_loss(1.5, 0.5), std::log(1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(bt_loss(1.0, 0.0), 0.313262, 1e-6);
  EXPECT_LT(bt_loss(50.0, 0.0), 1e-20);
  EXPECT_GT(bt_loss(50.0, 0.0), 0.0);
  EXPECT_NEAR(bt_loss(0.0, 50.0), 50.0, 1e-12);
  EXPECT_NEAR(bt_loss(0.0, 1000.0), 1000.0, 1e-9);
}

TEST(BtLoss, RejectsNonFinite) {
  EXPECT_THROW(bt_loss(std::nan(""), 0.0), ValidationError);
  EXPECT_THROW(bt_loss(0.0, std::numeric_limits<double>::infinity()), ValidationError);
}

TEST(BtLoss, MonotoneAndComplementary) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<double> deltas(2000);
  for (auto& d : deltas) d = u(rng);
  std::sort(deltas.begin(), deltas.end());
  for (std::size_t i = 1; i < deltas.size(); ++i) {
    if (deltas[i] > deltas[i - 1]) EXPECT_LT(bt_loss(deltas[i], 0.0), bt_loss(deltas[i - 1], 0.0));
  }
  // sigma(d) + sigma(-d) = 1
  for (double d : deltas) {
    EXPECT_NEAR(bt_loss(d, 0.0), -std::log(1.0 - std::exp(-bt_loss(-d, 0.0))), 1e-9) << d;
  }
}

TEST(Head, InitStdAndDeterminism) {
  EXPECT_EQ(default_init_std(3), 0.5);
  const auto a = init_head(3, 11), b = init_head(3, 11), c = init_head(3, 12);
  EXPECT_EQ(a.init_std, 0.5);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_NE(a.weights, c.weights);
  EXPECT_EQ(a.weights.size(), 3);
}

TEST(Head, SinglePairSeparation) {
  FeatureStore f;
  f["x/chosen"] = Eigen::Vector3d(1, 0, 0);
  f["x/rejected"] = Eigen::Vector3d(0, 0, 0);
  FitConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.epochs = 100;
  cfg.batch_size = 0;
  const std::vector<KeyPair> pairs = {{"x/chosen", "x/rejected"}};
  const auto fit = fit_head(f, pairs, cfg);
  EXPECT_GT(fit.head.weights(0), 0.0);
  EXPECT_EQ(pair_accuracy(fit.head, f, pairs), 1.0);
  ASSERT_EQ(fit.loss_history.size(), 100u);
  for (std::size_t i = 1; i < fit.loss_history.size(); ++i) EXPECT_LE(fit.loss_history[i], fit.loss_history[i - 1]);
}

TEST(Head, Errors) {
  FeatureStore f;
  f["a"] = Eigen::Vector2d(1, 0);
  FitConfig cfg;
  EXPECT_THROW(fit_head(f, {{"a", "b"}}, cfg), ValidationError);
  EXPECT_THROW(fit_head(f, {}, cfg), ValidationError);

  f["b"] = Eigen::Vector2d(-1e200, 0);
  f["c"] = Eigen::Vector2d(1e200, 0);
  cfg.learning_rate = 1e200;
  cfg.batch_size = 0;
  EXPECT_THROW(fit_head(f, {{"a", "b"}, {"b", "c"}}, cfg), DivergenceError);
}

TEST(Head, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  FeatureStore f;
  std::vector<KeyPair> pairs;
  for (int i = 0; i < 12; ++i) {
    Eigen::VectorXd a(5), b(5);
    for (int j = 0; j < 5; ++j) a(j) = n(rng), b(j) = n(rng);
    f["w" + std::to_string(i)] = a;
    f["l" + std::to_string(i)] = b;
    pairs.push_back({"w" + std::to_string(i), "l" + std::to_string(i)});
  }
  Eigen::VectorXd w(5);
  for (int j = 0; j < 5; ++j) w(j) = n(rng);
  const auto g = bt_gradient(w, f, pairs, 0.3);
  for (Eigen::Index k = 0; k < 5; ++k) {
    const double fd = oracle::central_difference([&](const Eigen::VectorXd& x) { return bt_objective(x, f, pairs, 0.3); }, w, k, 1e-5);
    EXPECT_NEAR(g(k), fd, 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Head, DumpRoundTrip) {
  auto h = init_head(6, 3);
  h.bias = 0.25;
  const auto d = head_to_dump(h, "rm");
  const auto back = head_from_dump(parse_dump_bytes(serialize_dump(d)));
  // XRMD payloads are f32.
  EXPECT_EQ(back.weights, h.weights.cast<float>().cast<double>());
  EXPECT_EQ(back.bias, 0.0 + h.bias);
  EXPECT_EQ(back.init_seed, 3u);
  EXPECT_EQ(back.init_std, h.init_std);
}

TEST(ScorePairs, WorkedExample) {
  std::vector<PreferencePair> pairs;
  const auto r = rewards_for({{1.0, 0.5}, {2.0, 0.1}, {0.3, 0.9}}, pairs);
  const auto b = score_pairs(r, pairs);
  EXPECT_NEAR(b.per_category.at(Category::chat).accuracy, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(b.model_name, "m");
  EXPECT_EQ(b.language, "es");
}

TEST(ScorePairs, TiesAreIncorrect) {
  std::vector<PreferencePair> pairs;
  const auto r = rewards_for({{0.5, 0.5}, {0.5, 0.5}}, pairs);
  EXPECT_EQ(score_pairs(r, pairs).macro_average, 0.0);
}

TEST(ScorePairs, MacroAverageOfTable) {
  const auto b = bench({{Category::chat, 863}, {Category::chat_hard, 693}, {Category::safety, 893}, {Category::reasoning, 724}}, "en");
  EXPECT_NEAR(to_percent(b.macro_average), 79.325, 1e-12);
  EXPECT_EQ(round_tenth(to_percent(b.macro_average)), 79.3);
  double sum = 0.0;
  for (const auto& [c, s] : b.per_category) sum += s.accuracy;
  EXPECT_NEAR(b.macro_average, sum / 4.0, 1e-12);
}

TEST(ScorePairs, PermutationAndFlip) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<std::pair<double, double>> vals(300);
  for (auto& v : vals) v = {u(rng), u(rng)};
  std::vector<PreferencePair> pairs;
  auto r = rewards_for(vals, pairs, Category::safety);
  const double acc = score_pairs(r, pairs).macro_average;

  auto shuffled = pairs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::shuffle(r.begin(), r.end(), rng);
  EXPECT_EQ(score_pairs(r, shuffled).macro_average, acc);

  for (auto& rec : r) rec.response_id = rec.response_id == "chosen" ? "rejected" : "chosen";
  EXPECT_NEAR(score_pairs(r, pairs).macro_average, 1.0 - acc, 1e-12);

  for (auto& rec : r) rec.reward += 17.0;
  EXPECT_NEAR(score_pairs(r, pairs).macro_average, 1.0 - acc, 1e-12);
}

TEST(ScorePairs, MissingRewardsAndMixedModels) {
  std::vector<PreferencePair> pairs;
  auto r = rewards_for({{1, 0}, {1, 0}, {1, 0}}, pairs);
  auto missing = r;
  missing.erase(missing.begin() + 3);  // p1 rejected
  try {
    score_pairs(missing, pairs);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("p1"), std::string::npos);
  }

  auto mixed = r;
  for (auto rec : r) {
    rec.model_name = "other";
    rec.reward = -rec.reward;
    mixed.push_back(rec);
  }
  EXPECT_THROW(score_pairs(mixed, pairs), ValidationError);
  EXPECT_EQ(score_pairs(mixed, pairs, "m").macro_average, 1.0);
  EXPECT_EQ(score_pairs(mixed, pairs, "other").macro_average, 0.0);
}

TEST(Delta, SpanishAverage) {
  const auto en = bench({{Category::chat, 863}, {Category::chat_hard, 693}, {Category::safety, 893}, {Category::reasoning, 724}}, "en");
  const auto es = bench({{Category::chat, 800}, {Category::chat_hard, 700}, {Category::safety, 800}, {Category::reasoning, 700}}, "es");
  const auto row = delta_table(en, es);
  EXPECT_NEAR(row.deltas.at(kAverageColumn), 0.04325, 1e-12);
  EXPECT_NEAR(row.printed_deltas.at(kAverageColumn), 4.3, 1e-9);
  EXPECT_NEAR(row.deltas.at("chat"), 0.063, 1e-12);
}

TEST(Delta, ChineseChatAndIdentity) {
  const auto en = bench({{Category::chat, 547}}, "en");
  const auto zh = bench({{Category::chat, 687}}, "zh");
  EXPECT_NEAR(delta_table(en, zh).printed_deltas.at("chat"), -14.0, 1e-9);
  for (const auto& [k, v] : delta_table(en, en).deltas) EXPECT_EQ(v, 0.0) << k;
}

TEST(Delta, CategoryMismatch) {
  const auto a = bench({{Category::chat, 500}}, "en");
  const auto b = bench({{Category::safety, 500}}, "zh");
  EXPECT_THROW(delta_table(a, b), ValidationError);
}

TEST(RoundTenth, HalfAwayFromZero) {
  EXPECT_EQ(round_tenth(70.15), 70.2);
  EXPECT_EQ(round_tenth(79.325), 79.3);
  EXPECT_EQ(round_tenth(-4.35), -4.4);
  EXPECT_EQ(round_tenth(0.04), 0.0);
}

TEST(SelectExtremes, WorkedExamples) {
  const auto p = select_extremes({{"r0", 0.1}, {"r1", 0.9}, {"r2", 0.5}, {"r3", 0.3}});
  ASSERT_TRUE(p);
  EXPECT_EQ(p->first, "r1");
  EXPECT_EQ(p->second, "r0");
  EXPECT_FALSE(select_extremes({{"r0", 0.2}, {"r1", 0.2}, {"r2", 0.2}, {"r3", 0.2}}));
  EXPECT_FALSE(select_extremes({{"r0", 0.2}}));
  const auto t = select_extremes({{"r3", 1.0}, {"r1", 1.0}, {"r2", 0.0}, {"r0", 0.0}});
  ASSERT_TRUE(t);
  EXPECT_EQ(t->first, "r1");
  EXPECT_EQ(t->second, "r0");
}

TEST(BestOfN, MatchesExhaustiveScan) {
  Quiet quiet;
  std::mt19937_64 rng(8);
  std::vector<RewardRecord> rewards;
  ResponseSet responses;
  std::map<std::string, std::vector<oracle::Scored>> groups;
  for (int p = 0; p < 100; ++p) {
    const std::string id = "q" + std::to_string(100 + p);
    for (int k = 0; k < 4; ++k) {
      const std::string rid = "r" + std::to_string(k);
      // Coarse values so ties actually happen.
      const double reward = static_cast<double>(rng() % 5) / 4.0;
      rewards.push_back({id, rid, reward, std::nullopt, "m", 0});
      const std::string text = (rng() % 10 == 0) ? "same" : id + rid;
      responses.texts[{id, rid}] = text;
      groups[id].push_back({rid, reward, text});
    }
  }
  const auto out = best_of_n_pairs(rewards, responses, 4);
  std::size_t pi = 0, ties = 0, same = 0;
  for (const auto& [id, g] : groups) {
    const auto e = oracle::best_of_n_scan(g);
    if (e.kind == oracle::BonExpectation::pair) {
      ASSERT_LT(pi, out.pairs.size());
      EXPECT_EQ(out.pairs[pi].pair_id, id);
      EXPECT_EQ(out.pairs[pi].chosen, responses.texts.at({id, e.chosen}));
      EXPECT_EQ(out.pairs[pi].rejected, responses.texts.at({id, e.rejected}));
      EXPECT_EQ(out.pairs[pi].language, "und");
      ++pi;
    } else if (e.kind == oracle::BonExpectation::tie) {
      EXPECT_EQ(out.skipped_ties.at(ties++), id);
    } else if (e.kind == oracle::BonExpectation::identical) {
      EXPECT_EQ(out.skipped_identical_text.at(same++), id);
    }
  }
  EXPECT_EQ(pi, out.pairs.size());
  EXPECT_EQ(ties, out.skipped_ties.size());
  EXPECT_TRUE(out.ragged.empty());

  // A per-prompt constant shift selects the same responses.
  auto shifted = rewards;
  for (auto& r : shifted) r.reward += static_cast<double>(std::stoi(r.example_id.substr(1)));
  const auto again = best_of_n_pairs(shifted, responses, 4);
  ASSERT_EQ(again.pairs.size(), out.pairs.size());
  for (std::size_t i = 0; i < out.pairs.size(); ++i) {
    EXPECT_EQ(again.pairs[i].chosen, out.pairs[i].chosen);
    EXPECT_EQ(again.pairs[i].rejected, out.pairs[i].rejected);
  }
}

TEST(BestOfN, RaggedAndShortPrompts) {
  std::vector<std::string> warnings;
  auto prev = set_log_sink([&](std::string_view w) { warnings.emplace_back(w); });
  std::istringstream in(
      R"({"example_id":"a","response_id":"r0","response":"x","language":"ko"})" "\n"
      R"({"example_id":"a","response_id":"r1","response":"y"})" "\n"
      R"({"example_id":"a","response_id":"r2","response":"z"})" "\n"
      R"({"example_id":"b","response_id":"r0","response":"w"})" "\n");
  const auto responses = parse_responses(in);
  const std::vector<RewardRecord> rewards = {
      {"a", "r0", 0.1, std::nullopt, "m", 0}, {"a", "r1", 0.7, std::nullopt, "m", 0},
      {"a", "r2", 0.4, std::nullopt, "m", 0}, {"b", "r0", 0.5, std::nullopt, "m", 0}};
  const auto out = best_of_n_pairs(rewards, responses, 4);
  set_log_sink(prev);
  ASSERT_EQ(out.pairs.size(), 1u);
  EXPECT_EQ(out.pairs[0].chosen, "y");
  EXPECT_EQ(out.pairs[0].rejected, "x");
  EXPECT_EQ(out.pairs[0].language, "ko");
  EXPECT_EQ(out.skipped_too_few, std::vector<std::string>{"b"});
  EXPECT_EQ(out.ragged, std::vector<std::string>{"a"});
  EXPECT_EQ(warnings.size(), 2u);
}

TEST(BestOfN, MissingTextAndMixedModels) {
  ResponseSet responses;
  responses.texts[{"a", "r0"}] = "x";
  const std::vector<RewardRecord> rewards = {{"a", "r0", 0.1, std::nullopt, "m", 0},
                                             {"a", "r1", 0.7, std::nullopt, "m", 0}};
  EXPECT_THROW(best_of_n_pairs(rewards, responses, 2), ValidationError);
  responses.texts[{"a", "r1"}] = "y";
  auto mixed = rewards;
  mixed[1].model_name = "n";
  EXPECT_THROW(best_of_n_pairs(mixed, responses, 2), ValidationError);
}
