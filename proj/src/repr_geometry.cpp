#include "xrm/repr_geometry.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "xrm/jsonl.hpp"
#include "xrm/parallel.hpp"

namespace xrm {

void ParallelExample::validate() const {
  if (languages.size() < 2) {
    throw ValidationError("example '" + example_id + "' needs at least two languages");
  }
  Eigen::Index width = -1;
  for (const auto& language : languages) {
    auto it = per_language_states.find(language);
    if (it == per_language_states.end()) {
      throw ValidationError("example '" + example_id + "' has no state for language '" + language + "'");
    }
    if (width >= 0 && it->second.size() != width) {
      throw ValidationError("example '" + example_id + "' has states of differing length");
    }
    width = it->second.size();
  }
}

Eigen::MatrixXd build_matrix(const ParallelExample& example) {
  example.validate();
  const auto& first = example.per_language_states.at(example.languages.front());
  Eigen::MatrixXd h(static_cast<Eigen::Index>(example.languages.size()), first.size());
  for (std::size_t i = 0; i < example.languages.size(); ++i) {
    h.row(static_cast<Eigen::Index>(i)) =
        example.per_language_states.at(example.languages[i]).transpose();
  }
  return h;
}

std::vector<ParallelSpec> parse_parallel_manifest(std::istream& in) {
  std::vector<ParallelSpec> specs;
  std::map<std::string, std::size_t> index;
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
  for_each_jsonl(in, [&](const nlohmann::json& obj, std::size_t line) {
    auto example_id = jsonl_string(obj, "example_id", line);
    auto language = jsonl_string(obj, "language", line);
    auto [pos, inserted] = seen.emplace(std::pair{example_id, language}, line);
    if (!inserted) {
      throw ValidationError("duplicate manifest key (" + example_id + ", " + language + ") on lines " +
                            std::to_string(pos->second) + " and " + std::to_string(line));
    }
    auto [it, fresh] = index.emplace(example_id, specs.size());
    if (fresh) specs.push_back(ParallelSpec{example_id, {}});
    specs[it->second].languages.push_back(std::move(language));
  });
  return specs;
}

std::vector<ParallelSpec> read_parallel_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  return parse_parallel_manifest(in);
}

std::vector<ParallelExample> gather_examples(const ModelDump& dump,
                                             const std::vector<ParallelSpec>& specs) {
  std::vector<ParallelExample> out;
  out.reserve(specs.size());
  std::string missing;
  std::size_t missing_count = 0;
  for (const auto& spec : specs) {
    ParallelExample ex{spec.example_id, spec.languages, {}};
    for (const auto& language : spec.languages) {
      if (const auto* state = dump.find_state(spec.example_id, language)) {
        ex.per_language_states.emplace(language, state->cast<double>());
      } else {
        if (missing_count++ < 20) missing += " (" + spec.example_id + ", " + language + ")";
      }
    }
    out.push_back(std::move(ex));
  }
  if (missing_count > 0) {
    throw ValidationError("dump '" + dump.model_name + "' lacks " + std::to_string(missing_count) +
                          " hidden state(s):" + missing + (missing_count > 20 ? " ..." : ""));
  }
  return out;
}

HomogeneityProfile profile(const std::string& model_name, const std::vector<ParallelExample>& dataset) {
  if (dataset.empty()) throw ValidationError("empty parallel dataset");
  HomogeneityProfile p;
  p.model_name = model_name;
  p.examples.resize(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) {
    const auto result = homogeneity(build_matrix(dataset[i]));
    auto& slot = p.examples[i];
    slot.example_id = dataset[i].example_id;
    slot.score = result.score;
    slot.singular_values.assign(result.singular_values.data(),
                                result.singular_values.data() + result.singular_values.size());
  });

  const double n = static_cast<double>(p.examples.size());
  double sum = 0.0;
  p.min = p.examples.front().score;
  p.max = p.min;
  for (const auto& e : p.examples) {
    sum += e.score;
    p.min = std::min(p.min, e.score);
    p.max = std::max(p.max, e.score);
  }
  p.mean = sum / n;
  double ss = 0.0;
  for (const auto& e : p.examples) ss += (e.score - p.mean) * (e.score - p.mean);
  p.std = std::sqrt(ss / n);
  return p;
}

HomogeneityProfile profile(const ModelDump& dump, const std::vector<ParallelSpec>& dataset) {
  return profile(dump.model_name, gather_examples(dump, dataset));
}

ProfileComparison compare_profiles(const HomogeneityProfile& base, const HomogeneityProfile& tuned) {
  std::map<std::string, double> base_scores;
  std::map<std::string, double> tuned_scores;
  for (const auto& e : base.examples) base_scores.emplace(e.example_id, e.score);
  for (const auto& e : tuned.examples) tuned_scores.emplace(e.example_id, e.score);
  if (base_scores.size() != tuned_scores.size() ||
      !std::equal(base_scores.begin(), base_scores.end(), tuned_scores.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw ValidationError("profiles '" + base.model_name + "' and '" + tuned.model_name +
                          "' cover different example sets");
  }
  if (base_scores.empty()) throw ValidationError("cannot compare empty profiles");

  ProfileComparison c;
  c.base_model = base.model_name;
  c.tuned_model = tuned.model_name;
  double sum = 0.0;
  std::size_t higher = 0;
  for (const auto& [id, b] : base_scores) {
    const double t = tuned_scores.at(id);
    c.differences.push_back({id, b, t, t - b});
    sum += t - b;
    if (t > b) ++higher;
  }
  const double n = static_cast<double>(c.differences.size());
  c.mean_shift = sum / n;
  c.fraction_tuned_higher = static_cast<double>(higher) / n;
  return c;
}

}  // namespace xrm
