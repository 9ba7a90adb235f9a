#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "xrm/jsonl.hpp"
#include "xrm/tensor_io.hpp"

namespace xrm {

// ---------------------------------------------------------------------------
// Bradley-Terry objective

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -ln sigma(margin) = ln(1 + e^-margin), evaluated without overflow.
inline double bt_loss_margin(double margin) {
  return margin >= 0.0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

// Negative log-likelihood that chosen beats rejected. Throws ValidationError
// on non-finite rewards.
double bt_loss(double reward_chosen, double reward_rejected);

// ---------------------------------------------------------------------------
// Linear reward head on exported features

struct LinearHead {
  Eigen::VectorXd weights;
  // Cancels in every pairwise margin, so fitting never moves it.
  double bias = 0.0;
  std::uint64_t init_seed = 0;
  double init_std = 0.0;

  double score(const Eigen::Ref<const Eigen::VectorXd>& features) const {
    return weights.dot(features) + bias;
  }
};

inline double default_init_std(std::size_t d_model) {
  return 1.0 / std::sqrt(static_cast<double>(d_model) + 1.0);
}

// Weights i.i.d. N(0, default_init_std(d_model)); deterministic per seed.
LinearHead init_head(std::size_t d_model, std::uint64_t seed);

using FeatureStore = std::map<std::string, Eigen::VectorXd>;

struct KeyPair {
  std::string chosen;
  std::string rejected;
};

struct FitConfig {
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  int epochs = 200;
  // 0 means full batch.
  std::size_t batch_size = 32;
  double l2 = 0.0;
};

struct FitResult {
  LinearHead head;
  std::vector<double> loss_history;  // objective after each epoch
};

// Mean pairwise loss plus (l2 / 2) ||w||^2.
double bt_objective(const Eigen::VectorXd& weights, const FeatureStore& features,
                    const std::vector<KeyPair>& pairs, double l2);

// Gradient of bt_objective: mean of -(1 - sigma(delta)) (phi_w - phi_l),
// plus l2 w.
Eigen::VectorXd bt_gradient(const Eigen::VectorXd& weights, const FeatureStore& features,
                            const std::vector<KeyPair>& pairs, double l2);

// Mini-batch gradient descent from init_head(d, config.seed). Throws
// ValidationError for missing keys and DivergenceError when the objective
// stops being finite.
FitResult fit_head(const FeatureStore& features, const std::vector<KeyPair>& pairs,
                   const FitConfig& config);

// Share of pairs the head orders strictly correctly.
double pair_accuracy(const LinearHead& head, const FeatureStore& features,
                     const std::vector<KeyPair>& pairs);

// Features are hidden tensors named hidden/{response_key}/feat.
FeatureStore features_from_dump(const ModelDump& dump);

// Response keys {pair_id}/chosen and {pair_id}/rejected.
std::vector<KeyPair> key_pairs_for(const std::vector<PreferencePair>& pairs);

// Single-tensor dump ("weights", shape [d_model]); bias and init settings
// ride in extra metadata.
ModelDump head_to_dump(const LinearHead& head, const std::string& model_name);
LinearHead head_from_dump(const ModelDump& dump);

// ---------------------------------------------------------------------------
// Benchmark scoring

struct CategoryScore {
  double correct = 0.0;
  std::size_t total = 0;
  double accuracy = 0.0;
};

struct BenchResult {
  std::string model_name;
  std::string language;
  std::map<Category, CategoryScore> per_category;
  double macro_average = 0.0;  // unweighted mean over categories present

  // Recomputes accuracies and the macro average from the counts.
  void finalize();
};

// Rounds a percentage to one decimal, halves away from zero.
double round_tenth(double percent);

inline double to_percent(double accuracy) { return 100.0 * accuracy; }

// Rewards are keyed to pairs as example_id = pair_id, response_id "chosen"
// or "rejected". A pair is correct iff reward(chosen) > reward(rejected).
// When rewards mix models, model selects one; otherwise ValidationError.
// Missing rewards raise ValidationError listing the pair ids.
BenchResult score_pairs(const std::vector<RewardRecord>& rewards,
                        const std::vector<PreferencePair>& pairs,
                        const std::optional<std::string>& model = std::nullopt);

inline constexpr const char* kAverageColumn = "avg";

struct DeltaRow {
  BenchResult english;
  BenchResult target;
  // english - target per category name and "avg", in accuracy units.
  std::map<std::string, double> deltas;
  // The same cells as they appear in a one-decimal percentage table: the
  // difference of the two rounded entries.
  std::map<std::string, double> printed_deltas;
};

// Throws ValidationError unless both results cover the same categories.
DeltaRow delta_table(const BenchResult& english, const BenchResult& target);

// ---------------------------------------------------------------------------
// Best-of-N preference pairs

struct ResponseSet {
  // (example_id, response_id) -> response text
  std::map<std::pair<std::string, std::string>, std::string> texts;
  std::map<std::string, std::string> prompts;
  std::map<std::string, std::string> languages;
};

// JSONL rows {"example_id", "response_id", "response", "prompt"?, "language"?}.
ResponseSet read_responses(const std::filesystem::path& path);
ResponseSet parse_responses(std::istream& in);

struct ScoredResponse {
  std::string response_id;
  double reward = 0.0;
};

// Highest and lowest reward; ties go to the smallest response_id. nullopt
// when fewer than two responses or every reward is equal.
std::optional<std::pair<std::string, std::string>> select_extremes(
    const std::vector<ScoredResponse>& responses);

struct BestOfNResult {
  std::vector<PreferencePair> pairs;                 // sorted by example_id
  std::vector<std::string> skipped_ties;             // max reward == min reward
  std::vector<std::string> skipped_too_few;          // fewer than 2 responses
  std::vector<std::string> skipped_identical_text;   // chosen text == rejected text
  std::vector<std::string> ragged;                   // response count != n_expected
};

// Throws ValidationError when a selected response has no text or rewards
// come from more than one model.
BestOfNResult best_of_n_pairs(const std::vector<RewardRecord>& rewards,
                              const ResponseSet& responses, std::size_t n_expected);

}  // namespace xrm
