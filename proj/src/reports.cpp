#include "xrm/reports.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace xrm::reports {
namespace {

using nlohmann::json;

std::string pad_right(const std::string& s, std::size_t width) {
  // Width counts code points so labels such as the delta glyph align.
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
  return cps >= width ? s + " " : s + std::string(width - cps, ' ');
}

std::string render_rows(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::size_t cps = 0;
      for (unsigned char c : row[i]) cps += (c & 0xC0) != 0x80;
      widths[i] = std::max(widths[i], cps);
    }
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      line += i + 1 == row.size() ? row[i] : pad_right(row[i], widths[i] + 2);
    }
    out += line + "\n";
  }
  return out;
}

std::vector<Category> categories_of(const std::vector<BenchResult>& results) {
  std::set<Category> present;
  for (const auto& r : results)
    for (const auto& [c, s] : r.per_category)
      if (s.total > 0) present.insert(c);
  return {present.begin(), present.end()};
}

std::string percent_cell(double accuracy) { return fixed(round_tenth(to_percent(accuracy)), 1); }

}  // namespace

std::string fixed(double value, int decimals, bool signed_prefix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, signed_prefix ? "%+.*f" : "%.*f", decimals, value);
  std::string s = buf;
  if (s.find_first_of("123456789") == std::string::npos && s.front() == '-') {
    s[0] = '+';
    if (!signed_prefix) s.erase(0, 1);
  }
  return s;
}

json dump_summary(const ModelDump& dump) {
  std::set<std::string> languages;
  std::set<std::string> examples;
  for (const auto& [key, state] : dump.hidden_states) {
    languages.insert(key.language);
    examples.insert(key.example_id);
  }
  json extra_tensors = json::object();
  for (const auto& [name, t] : dump.extra_tensors) extra_tensors[name] = t.shape;
  return {{"model_name", dump.model_name},
          {"d_model", dump.d_model},
          {"vocab_size", dump.vocab_size},
          {"has_embeddings", dump.embeddings.has_value()},
          {"hidden_states", dump.hidden_states.size()},
          {"hidden_examples", examples.size()},
          {"hidden_languages", languages},
          {"extra_tensors", extra_tensors},
          {"metadata", dump.extra_metadata}};
}

json partition_json(const VocabPartition& partition) {
  json counts = json::object();
  for (const auto& l : partition.languages) counts[l] = partition.count(l);
  return {{"mode", to_string(partition.mode)},
          {"vocab_size", partition.vocab_size},
          {"languages", partition.languages},
          {"counts", counts},
          {"unassigned", partition.unassigned.size()},
          {"empty_languages", partition.empty_languages()}};
}

json norms_json(const std::string& model_name, const std::map<std::string, NormDistribution>& norms) {
  json langs = json::object();
  for (const auto& [language, d] : norms) {
    json quantiles = json::object();
    for (std::size_t q = 0; q < kNormQuantileLevels.size(); ++q) {
      quantiles[fixed(100.0 * kNormQuantileLevels[q], 0) + "%"] = d.quantiles[q];
    }
    json histogram = json::array();
    for (const auto& b : d.histogram) histogram.push_back({b.lower, b.upper, b.count});
    langs[language] = {{"count", d.count}, {"empty", d.empty()}, {"mean", d.mean},
                       {"std", d.std},     {"min", d.min},       {"max", d.max},
                       {"quantiles", quantiles}, {"histogram", histogram}};
  }
  return {{"model_name", model_name}, {"languages", langs}};
}

std::string distances_csv(const std::map<std::string, NormDistribution>& norms) {
  std::string out = "language_a,language_b,wasserstein1\n";
  for (auto a = norms.begin(); a != norms.end(); ++a) {
    for (auto b = std::next(a); b != norms.end(); ++b) {
      if (a->second.empty() || b->second.empty()) continue;
      out += a->first + "," + b->first + "," + fixed(norm_distance(a->second, b->second), 9) + "\n";
    }
  }
  return out;
}

std::string histogram_plotdata(const std::map<std::string, NormDistribution>& norms) {
  std::string out;
  for (const auto& [language, d] : norms) {
    out += "# " + language + "\n";
    for (const auto& b : d.histogram) out += fixed(b.center(), 6) + " " + std::to_string(b.count) + "\n";
    out += "\n";
  }
  return out;
}

json profile_json(const HomogeneityProfile& profile) {
  json examples = json::array();
  for (const auto& e : profile.examples) {
    examples.push_back({{"example_id", e.example_id}, {"score", e.score}, {"singular_values", e.singular_values}});
  }
  return {{"model_name", profile.model_name}, {"mean", profile.mean}, {"std", profile.std},
          {"min", profile.min}, {"max", profile.max}, {"count", profile.examples.size()},
          {"examples", examples}};
}

std::string scores_csv(const HomogeneityProfile& profile) {
  std::string out = "example_id,score\n";
  for (const auto& e : profile.examples) out += e.example_id + "," + fixed(e.score, 12) + "\n";
  return out;
}

json comparison_json(const ProfileComparison& c) {
  json diffs = json::array();
  for (const auto& d : c.differences) {
    diffs.push_back({{"example_id", d.example_id}, {"base", d.base}, {"tuned", d.tuned}, {"difference", d.difference}});
  }
  return {{"base_model", c.base_model}, {"tuned_model", c.tuned_model}, {"mean_shift", c.mean_shift},
          {"fraction_tuned_higher", c.fraction_tuned_higher}, {"differences", diffs}};
}

std::string homogeneity_plotdata(const std::vector<HomogeneityProfile>& profiles) {
  std::string out = "# model mean std\n";
  for (const auto& p : profiles) out += p.model_name + " " + fixed(p.mean, 9) + " " + fixed(p.std, 9) + "\n";
  return out;
}

std::string category_label(Category c) {
  switch (c) {
    case Category::chat: return "Chat";
    case Category::chat_hard: return "Chat(H)";
    case Category::safety: return "Safety";
    case Category::reasoning: return "Reason";
    case Category::other: return "Other";
  }
  return "Other";
}

json bench_json(const BenchResult& r) {
  json cats = json::object();
  for (const auto& [c, s] : r.per_category) {
    cats[std::string(to_string(c))] = {{"correct", s.correct}, {"total", s.total}, {"accuracy", s.accuracy}};
  }
  return {{"model_name", r.model_name}, {"language", r.language}, {"per_category", cats},
          {"macro_average", r.macro_average}};
}

std::string bench_csv(const std::vector<BenchResult>& results) {
  std::string out = "model_name,language,category,correct,total,accuracy\n";
  for (const auto& r : results) {
    for (const auto& [c, s] : r.per_category) {
      out += r.model_name + "," + r.language + "," + std::string(to_string(c)) + "," + fixed(s.correct, 0) + "," +
             std::to_string(s.total) + "," + fixed(s.accuracy, 6) + "\n";
    }
    out += r.model_name + "," + r.language + ",avg,,," + fixed(r.macro_average, 6) + "\n";
  }
  return out;
}

std::string bench_table(const std::vector<BenchResult>& results) {
  const auto cats = categories_of(results);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"Model", "Lang"};
  for (Category c : cats) header.push_back(category_label(c));
  header.push_back("Avg.");
  rows.push_back(header);
  for (const auto& r : results) {
    std::vector<std::string> row = {r.model_name, r.language};
    for (Category c : cats) {
      auto it = r.per_category.find(c);
      row.push_back(it == r.per_category.end() || it->second.total == 0 ? "-" : percent_cell(it->second.accuracy));
    }
    row.push_back(percent_cell(r.macro_average));
    rows.push_back(std::move(row));
  }
  return render_rows(rows);
}

json delta_json(const DeltaRow& row) {
  return {{"english", bench_json(row.english)}, {"target", bench_json(row.target)},
          {"deltas", row.deltas}, {"printed_deltas", row.printed_deltas}};
}

std::string delta_csv(const DeltaRow& row) {
  std::string out = "column,english,target,delta,printed_delta\n";
  for (const auto& [c, s] : row.english.per_category) {
    if (s.total == 0) continue;
    const std::string name(to_string(c));
    out += name + "," + fixed(s.accuracy, 6) + "," + fixed(row.target.per_category.at(c).accuracy, 6) + "," +
           fixed(row.deltas.at(name), 6) + "," + fixed(row.printed_deltas.at(name), 1, true) + "\n";
  }
  out += std::string(kAverageColumn) + "," + fixed(row.english.macro_average, 6) + "," +
         fixed(row.target.macro_average, 6) + "," + fixed(row.deltas.at(kAverageColumn), 6) + "," +
         fixed(row.printed_deltas.at(kAverageColumn), 1, true) + "\n";
  return out;
}

std::string delta_text(const DeltaRow& row) {
  const auto cats = categories_of({row.english});
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"Category"};
  for (Category c : cats) header.push_back(category_label(c));
  header.push_back("Avg.");
  rows.push_back(header);
  auto result_row = [&](const std::string& label, const BenchResult& r) {
    std::vector<std::string> out = {label};
    for (Category c : cats) out.push_back(percent_cell(r.per_category.at(c).accuracy));
    out.push_back(percent_cell(r.macro_average));
    return out;
  };
  rows.push_back(result_row("Target", row.target));
  rows.push_back(result_row("English", row.english));
  std::vector<std::string> delta = {"Δ"};
  for (Category c : cats) delta.push_back(fixed(row.printed_deltas.at(std::string(to_string(c))), 1, true));
  delta.push_back(fixed(row.printed_deltas.at(kAverageColumn), 1, true));
  rows.push_back(std::move(delta));
  return "English RM: " + row.english.model_name + "\nTarget RM:  " + row.target.model_name +
         "\nLanguage:   " + row.target.language + "\n\n" + render_rows(rows);
}

json fit_json(const FitResult& fit, const FitConfig& config, double train_accuracy) {
  return {{"d_model", fit.head.weights.size()},
          {"init_seed", fit.head.init_seed},
          {"init_std", fit.head.init_std},
          {"config", {{"seed", config.seed}, {"learning_rate", config.learning_rate}, {"epochs", config.epochs},
                      {"batch_size", config.batch_size}, {"l2", config.l2}}},
          {"final_loss", fit.loss_history.empty() ? 0.0 : fit.loss_history.back()},
          {"train_accuracy", train_accuracy}};
}

std::string loss_history_csv(const FitResult& fit) {
  std::string out = "epoch,loss\n";
  for (std::size_t i = 0; i < fit.loss_history.size(); ++i) {
    out += std::to_string(i + 1) + "," + fixed(fit.loss_history[i], 12) + "\n";
  }
  return out;
}

json best_of_n_json(const BestOfNResult& r) {
  return {{"pairs", r.pairs.size()},
          {"skipped_ties", r.skipped_ties},
          {"skipped_too_few", r.skipped_too_few},
          {"skipped_identical_text", r.skipped_identical_text},
          {"ragged", r.ragged}};
}

json winrate_json(const Evaluation& e, const JudgeConfig& config) {
  const auto& w = e.win_rate;
  return {{"wins", w.wins}, {"losses", w.losses}, {"ties", w.ties}, {"errors", w.errors}, {"rate", w.rate},
          {"instances", e.verdicts.size()}, {"requested", e.requested}, {"resumed", e.resumed},
          {"judge", {{"model", config.model}, {"endpoint", config.endpoint}, {"temperature", 0},
                     {"tie_credit", 0.5}, {"position_randomization", "seeded per instance"},
                     {"seed", config.seed}, {"max_retries", config.max_retries}}}};
}

}  // namespace xrm::reports
