#pragma once

// Report rendering: JSON documents, CSV, aligned text tables and columnar
// plot data. Every renderer is a pure function of its inputs, so identical
// inputs give byte-identical reports.

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xrm/embed_stats.hpp"
#include "xrm/judge.hpp"
#include "xrm/repr_geometry.hpp"
#include "xrm/reward_eval.hpp"
#include "xrm/vocab_lang.hpp"

namespace xrm::reports {

nlohmann::json dump_summary(const ModelDump& dump);

nlohmann::json partition_json(const VocabPartition& partition);
nlohmann::json norms_json(const std::string& model_name,
                          const std::map<std::string, NormDistribution>& norms);
// language_a,language_b,wasserstein1 for every non-empty pair.
std::string distances_csv(const std::map<std::string, NormDistribution>& norms);
// "# language" blocks of "bin_center count" lines.
std::string histogram_plotdata(const std::map<std::string, NormDistribution>& norms);

nlohmann::json profile_json(const HomogeneityProfile& profile);
std::string scores_csv(const HomogeneityProfile& profile);
nlohmann::json comparison_json(const ProfileComparison& comparison);
// model mean std, one line per profile in the order given.
std::string homogeneity_plotdata(const std::vector<HomogeneityProfile>& profiles);

std::string category_label(Category c);
nlohmann::json bench_json(const BenchResult& result);
std::string bench_csv(const std::vector<BenchResult>& results);
// One row per result, percentages to one decimal, Avg. last.
std::string bench_table(const std::vector<BenchResult>& results);

nlohmann::json delta_json(const DeltaRow& row);
std::string delta_csv(const DeltaRow& row);
// Target / English / delta rows in the layout of a cross-lingual RM table.
std::string delta_text(const DeltaRow& row);

nlohmann::json fit_json(const FitResult& fit, const FitConfig& config, double train_accuracy);
std::string loss_history_csv(const FitResult& fit);

nlohmann::json best_of_n_json(const BestOfNResult& result);

nlohmann::json winrate_json(const Evaluation& evaluation, const JudgeConfig& config);

// Formats with a fixed number of decimals; "+" prefix when signed is set.
std::string fixed(double value, int decimals, bool signed_prefix = false);

}  // namespace xrm::reports
