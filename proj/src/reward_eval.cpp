#include "xrm/reward_eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "xrm/errors.hpp"
#include "xrm/log.hpp"
#include "xrm/parallel.hpp"

namespace xrm {
namespace {

constexpr std::string_view kFeatureLanguage = "feat";
constexpr const char* kHeadTensor = "weights";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct PairDiffs {
  Eigen::MatrixXd diffs;  // one column per pair: phi_chosen - phi_rejected
};

PairDiffs pair_differences(const FeatureStore& features, const std::vector<KeyPair>& pairs) {
  if (pairs.empty()) throw ValidationError("no training pairs");
  auto lookup = [&](const std::string& key) -> const Eigen::VectorXd& {
    auto it = features.find(key);
    if (it == features.end()) throw ValidationError("no feature vector for response key '" + key + "'");
    return it->second;
  };
  const Eigen::Index d = lookup(pairs.front().chosen).size();
  PairDiffs out{Eigen::MatrixXd(d, static_cast<Eigen::Index>(pairs.size()))};
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& w = lookup(pairs[k].chosen);
    const auto& l = lookup(pairs[k].rejected);
    if (w.size() != d || l.size() != d) throw ValidationError("feature vectors differ in width");
    out.diffs.col(static_cast<Eigen::Index>(k)) = w - l;
  }
  return out;
}

double objective_from_diffs(const Eigen::VectorXd& w, const Eigen::MatrixXd& diffs, double l2) {
  const Eigen::VectorXd margins = diffs.transpose() * w;
  double total = 0.0;
  for (Eigen::Index k = 0; k < margins.size(); ++k) total += bt_loss_margin(margins(k));
  return total / static_cast<double>(margins.size()) + 0.5 * l2 * w.squaredNorm();
}

// Gradient over the columns listed in batch.
Eigen::VectorXd gradient_from_diffs(const Eigen::VectorXd& w, const Eigen::MatrixXd& diffs,
                                    std::span<const std::size_t> batch, double l2) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
  for (std::size_t k : batch) {
    const auto col = diffs.col(static_cast<Eigen::Index>(k));
    g -= sigmoid(-w.dot(col)) * col;
  }
  g /= static_cast<double>(batch.size());
  g += l2 * w;
  return g;
}

}  // namespace

double bt_loss(double reward_chosen, double reward_rejected) {
  if (!std::isfinite(reward_chosen) || !std::isfinite(reward_rejected)) {
    throw ValidationError("bt_loss needs finite rewards");
  }
  return bt_loss_margin(reward_chosen - reward_rejected);
}

LinearHead init_head(std::size_t d_model, std::uint64_t seed) {
  if (d_model == 0) throw ValidationError("d_model must be positive");
  LinearHead head;
  head.init_seed = seed;
  head.init_std = default_init_std(d_model);
  head.weights.resize(static_cast<Eigen::Index>(d_model));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, head.init_std);
  for (Eigen::Index i = 0; i < head.weights.size(); ++i) head.weights(i) = normal(rng);
  return head;
}

double bt_objective(const Eigen::VectorXd& weights, const FeatureStore& features,
                    const std::vector<KeyPair>& pairs, double l2) {
  const auto pd = pair_differences(features, pairs);
  return objective_from_diffs(weights, pd.diffs, l2);
}

Eigen::VectorXd bt_gradient(const Eigen::VectorXd& weights, const FeatureStore& features,
                            const std::vector<KeyPair>& pairs, double l2) {
  const auto pd = pair_differences(features, pairs);
  std::vector<std::size_t> all(pairs.size());
  std::iota(all.begin(), all.end(), 0);
  return gradient_from_diffs(weights, pd.diffs, all, l2);
}

FitResult fit_head(const FeatureStore& features, const std::vector<KeyPair>& pairs,
                   const FitConfig& config) {
  const auto pd = pair_differences(features, pairs);
  if (config.epochs < 1) throw ValidationError("epochs must be positive");
  if (!(config.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");

  FitResult result;
  result.head = init_head(static_cast<std::size_t>(pd.diffs.rows()), config.seed);
  auto& w = result.head.weights;

  const std::size_t n = pairs.size();
  const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      w -= config.learning_rate *
           gradient_from_diffs(w, pd.diffs, std::span(order).subspan(start, len), config.l2);
    }
    const double loss = objective_from_diffs(w, pd.diffs, config.l2);
    if (!std::isfinite(loss) || !w.allFinite()) {
      throw DivergenceError(epoch, "objective is " + format_double(loss));
    }
    result.loss_history.push_back(loss);
  }
  return result;
}

double pair_accuracy(const LinearHead& head, const FeatureStore& features,
                     const std::vector<KeyPair>& pairs) {
  const auto pd = pair_differences(features, pairs);
  const Eigen::VectorXd margins = pd.diffs.transpose() * head.weights;
  return static_cast<double>((margins.array() > 0.0).count()) / static_cast<double>(margins.size());
}

FeatureStore features_from_dump(const ModelDump& dump) {
  FeatureStore out;
  for (const auto& [key, state] : dump.hidden_states) {
    if (key.language == kFeatureLanguage) out.emplace(key.example_id, state.cast<double>());
  }
  return out;
}

std::vector<KeyPair> key_pairs_for(const std::vector<PreferencePair>& pairs) {
  std::vector<KeyPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.pair_id + "/chosen", p.pair_id + "/rejected"});
  return out;
}

ModelDump head_to_dump(const LinearHead& head, const std::string& model_name) {
  ModelDump dump;
  dump.model_name = model_name;
  dump.d_model = static_cast<std::size_t>(head.weights.size());
  Tensor t;
  t.shape = {dump.d_model};
  t.data.resize(dump.d_model);
  for (std::size_t i = 0; i < dump.d_model; ++i) t.data[i] = static_cast<float>(head.weights(static_cast<Eigen::Index>(i)));
  dump.extra_tensors.emplace(kHeadTensor, std::move(t));
  dump.extra_metadata = {{"bias", format_double(head.bias)},
                         {"init_seed", std::to_string(head.init_seed)},
                         {"init_std", format_double(head.init_std)}};
  return dump;
}

LinearHead head_from_dump(const ModelDump& dump) {
  auto it = dump.extra_tensors.find(kHeadTensor);
  if (it == dump.extra_tensors.end()) throw MissingTensorError("dump has no 'weights' tensor");
  LinearHead head;
  head.weights = Eigen::Map<const Eigen::VectorXf>(it->second.data.data(),
                                                   static_cast<Eigen::Index>(it->second.data.size()))
                     .cast<double>();
  auto meta = [&](const char* key) -> std::optional<std::string> {
    auto m = dump.extra_metadata.find(key);
    return m == dump.extra_metadata.end() ? std::nullopt : std::optional(m->second);
  };
  try {
    if (auto v = meta("bias")) head.bias = std::stod(*v);
    if (auto v = meta("init_seed")) head.init_seed = std::stoull(*v);
    if (auto v = meta("init_std")) head.init_std = std::stod(*v);
  } catch (const std::exception&) {
    throw ValidationError("head metadata is not numeric");
  }
  return head;
}

void BenchResult::finalize() {
  double sum = 0.0;
  std::size_t present = 0;
  for (auto& [category, s] : per_category) {
    if (s.total == 0) continue;
    s.accuracy = s.correct / static_cast<double>(s.total);
    sum += s.accuracy;
    ++present;
  }
  macro_average = present == 0 ? 0.0 : sum / static_cast<double>(present);
}

double round_tenth(double percent) {
  // The nudge keeps values such as 74.975 that are ties in decimal, but sit
  // a hair below in binary, rounding the way they print.
  const double scaled = std::abs(percent) * 10.0;
  const double rounded = std::floor(scaled + 0.5 + 1e-9) / 10.0;
  return percent < 0.0 ? -rounded : rounded;
}

BenchResult score_pairs(const std::vector<RewardRecord>& rewards,
                        const std::vector<PreferencePair>& pairs,
                        const std::optional<std::string>& model) {
  std::set<std::string> models;
  for (const auto& r : rewards) models.insert(r.model_name);
  std::string selected;
  if (model) {
    selected = *model;
  } else if (models.size() == 1) {
    selected = *models.begin();
  } else if (models.size() > 1) {
    throw ValidationError("rewards come from " + std::to_string(models.size()) +
                          " models; select one");
  }

  std::map<std::pair<std::string, std::string>, double> by_key;
  for (const auto& r : rewards) {
    if (r.model_name == selected) by_key.emplace(std::pair{r.example_id, r.response_id}, r.reward);
  }

  BenchResult result;
  result.model_name = selected;
  std::set<std::string> languages;
  std::vector<std::string> missing;
  for (const auto& p : pairs) {
    languages.insert(p.language);
    auto w = by_key.find({p.pair_id, "chosen"});
    auto l = by_key.find({p.pair_id, "rejected"});
    if (w == by_key.end() || l == by_key.end()) {
      missing.push_back(p.pair_id);
      continue;
    }
    auto& cell = result.per_category[p.category];
    ++cell.total;
    if (w->second > l->second) cell.correct += 1.0;
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 20); ++i) list += " " + missing[i];
    throw ValidationError("model '" + selected + "' has no chosen/rejected reward for " +
                          std::to_string(missing.size()) + " pair(s):" + list +
                          (missing.size() > 20 ? " ..." : ""));
  }
  result.language = languages.size() == 1 ? *languages.begin() : "mixed";
  result.finalize();
  return result;
}

DeltaRow delta_table(const BenchResult& english, const BenchResult& target) {
  auto categories = [](const BenchResult& r) {
    std::set<Category> out;
    for (const auto& [c, s] : r.per_category) {
      if (s.total > 0) out.insert(c);
    }
    return out;
  };
  if (categories(english) != categories(target)) {
    throw ValidationError("results for '" + english.model_name + "' and '" + target.model_name +
                          "' cover different categories");
  }
  DeltaRow row{english, target, {}, {}};
  auto put = [&](const std::string& name, double e, double t) {
    row.deltas[name] = e - t;
    row.printed_deltas[name] = round_tenth(round_tenth(to_percent(e)) - round_tenth(to_percent(t)));
  };
  for (const auto& [c, s] : english.per_category) {
    if (s.total == 0) continue;
    put(std::string(to_string(c)), s.accuracy, target.per_category.at(c).accuracy);
  }
  put(kAverageColumn, english.macro_average, target.macro_average);
  return row;
}

ResponseSet parse_responses(std::istream& in) {
  ResponseSet set;
  for_each_jsonl(in, [&](const nlohmann::json& obj, std::size_t line) {
    auto example_id = jsonl_string(obj, "example_id", line);
    auto response_id = jsonl_string(obj, "response_id", line);
    auto text = jsonl_string(obj, "response", line);
    if (auto prompt = jsonl_optional_string(obj, "prompt", line)) set.prompts[example_id] = *prompt;
    if (auto language = jsonl_optional_string(obj, "language", line)) set.languages[example_id] = *language;
    if (!set.texts.emplace(std::pair{example_id, response_id}, std::move(text)).second) {
      throw ValidationError("line " + std::to_string(line) + ": duplicate response (" + example_id +
                            ", " + response_id + ")");
    }
  });
  return set;
}

ResponseSet read_responses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open responses '" + path.string() + "'");
  return parse_responses(in);
}

std::optional<std::pair<std::string, std::string>> select_extremes(
    const std::vector<ScoredResponse>& responses) {
  if (responses.size() < 2) return std::nullopt;
  const ScoredResponse* best = &responses.front();
  const ScoredResponse* worst = &responses.front();
  for (const auto& r : responses) {
    if (r.reward > best->reward || (r.reward == best->reward && r.response_id < best->response_id)) best = &r;
    if (r.reward < worst->reward || (r.reward == worst->reward && r.response_id < worst->response_id)) worst = &r;
  }
  if (best->reward == worst->reward) return std::nullopt;
  return std::pair{best->response_id, worst->response_id};
}

BestOfNResult best_of_n_pairs(const std::vector<RewardRecord>& rewards, const ResponseSet& responses,
                              std::size_t n_expected) {
  std::set<std::string> models;
  std::map<std::string, std::vector<ScoredResponse>> groups;
  std::map<std::string, std::string> record_language;
  for (const auto& r : rewards) {
    models.insert(r.model_name);
    if (!responses.texts.contains({r.example_id, r.response_id})) {
      throw ValidationError("no response text for (" + r.example_id + ", " + r.response_id + ")");
    }
    groups[r.example_id].push_back({r.response_id, r.reward});
    if (r.language) record_language.emplace(r.example_id, *r.language);
  }
  if (models.size() > 1) throw ValidationError("best-of-N rewards must come from a single model");

  std::vector<std::string> ids;
  std::vector<const std::vector<ScoredResponse>*> members;
  for (const auto& [id, group] : groups) {
    ids.push_back(id);
    members.push_back(&group);
  }
  std::vector<std::optional<std::pair<std::string, std::string>>> picks(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) { picks[i] = select_extremes(*members[i]); });

  BestOfNResult out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& id = ids[i];
    const std::size_t count = members[i]->size();
    if (count < 2) {
      out.skipped_too_few.push_back(id);
      continue;
    }
    if (n_expected != 0 && count != n_expected) out.ragged.push_back(id);
    if (!picks[i]) {
      out.skipped_ties.push_back(id);
      continue;
    }
    const auto& chosen = responses.texts.at({id, picks[i]->first});
    const auto& rejected = responses.texts.at({id, picks[i]->second});
    if (chosen == rejected) {
      out.skipped_identical_text.push_back(id);
      continue;
    }
    PreferencePair p;
    p.pair_id = id;
    if (auto it = responses.prompts.find(id); it != responses.prompts.end()) p.prompt = it->second;
    p.chosen = chosen;
    p.rejected = rejected;
    if (auto it = record_language.find(id); it != record_language.end()) {
      p.language = it->second;
    } else if (auto lt = responses.languages.find(id); lt != responses.languages.end()) {
      p.language = lt->second;
    } else {
      p.language = "und";
    }
    out.pairs.push_back(std::move(p));
  }
  if (!out.skipped_too_few.empty()) {
    log_warning(std::to_string(out.skipped_too_few.size()) + " prompt(s) have fewer than 2 responses; skipped");
  }
  if (!out.ragged.empty()) {
    log_warning(std::to_string(out.ragged.size()) + " prompt(s) have a response count other than " +
                std::to_string(n_expected));
  }
  return out;
}

}  // namespace xrm
