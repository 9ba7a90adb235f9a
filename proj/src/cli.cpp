#include "xrm/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xrm/embed_stats.hpp"
#include "xrm/errors.hpp"
#include "xrm/judge.hpp"
#include "xrm/reports.hpp"
#include "xrm/repr_geometry.hpp"
#include "xrm/reward_eval.hpp"
#include "xrm/tensor_io.hpp"
#include "xrm/vocab_lang.hpp"

namespace xrm::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string out_dir = "xrm_out";
  std::string format;
  std::uint64_t seed = 0;

  std::vector<std::string> dumps;
  std::string vocab;
  std::string rules;
  std::string manifest;
  std::vector<std::string> rewards;
  std::string pairs;
  std::string responses;
  std::string model;
  std::string english_model;
  std::string target_model;
  std::size_t n_expected = 4;

  double learning_rate = 1e-3;
  int epochs = 200;
  std::size_t batch_size = 32;
  double l2 = 0.0;

  std::string instances;
  std::string endpoint;
  std::string judge_model;
  std::string judge_template;
  std::string verdicts;
  unsigned concurrency = 4;
  double rate = 4.0;
  int retries = 3;
  double timeout = 60.0;
  double backoff = 1.0;
};

// Holds an exclusive lock file inside the output directory for one run.
class OutputDir {
 public:
  explicit OutputDir(const fs::path& dir) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    lock_ = dir_ / ".xrm.lock";
    const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw IoError("output directory '" + dir_.string() + "' is locked by another run");
    ::close(fd);
  }
  ~OutputDir() {
    std::error_code ec;
    fs::remove(lock_, ec);
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  fs::path operator/(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + (dir_ / name).string() + "'");
    out << text;
    if (!out) throw IoError("failed writing '" + (dir_ / name).string() + "'");
  }
  void write(const std::string& name, const json& doc) const { write(name, doc.dump(2) + "\n"); }

 private:
  fs::path dir_;
  fs::path lock_;
};

std::string file_token(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_';
    if (!keep) c = '_';
  }
  return out.empty() ? "model" : out;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const OutputDir& dir, const std::string& subcommand, const std::vector<std::string>& argv,
                    const std::vector<std::string>& inputs, const json& config, std::uint64_t seed) {
  dir.write("run.json", json{{"subcommand", subcommand},
                             {"argv", argv},
                             {"inputs", inputs},
                             {"config", config},
                             {"seed", seed},
                             {"versions", {{"xrm", kVersion}, {"xrmd", kXrmdVersion}}},
                             {"timestamp", timestamp()}});
}

void emit(std::ostream& out, const std::string& format, const std::string& table, const json& doc,
          const std::string& csv, const std::string& plot) {
  if (format == "json") {
    out << doc.dump(2) << "\n";
  } else if (format == "csv") {
    out << csv;
  } else if (format == "plotdata") {
    out << plot;
  } else {
    out << table;
  }
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

int cmd_inspect(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  std::vector<ModelDump> dumps;
  for (const auto& p : o.dumps) dumps.push_back(parse_dump(p));
  OutputDir dir(o.out_dir);
  json docs = json::array();
  std::string table;
  for (const auto& d : dumps) {
    auto s = reports::dump_summary(d);
    table += d.model_name + ": d_model=" + std::to_string(d.d_model) + " vocab_size=" + std::to_string(d.vocab_size) +
             " embeddings=" + (d.embeddings ? "yes" : "no") + " hidden_states=" + std::to_string(d.hidden_states.size()) +
             " extra_tensors=" + std::to_string(d.extra_tensors.size()) + "\n";
    docs.push_back(std::move(s));
  }
  dir.write("inspect.json", docs);
  write_manifest(dir, "inspect", argv, o.dumps, json::object(), o.seed);
  emit(out, o.format, table, docs, table, table);
  return 0;
}

int cmd_norms(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  const auto tokens = load_vocab(o.vocab);
  const auto rules = o.rules.empty() ? ClassificationRules::defaults() : load_rules(o.rules);
  const auto partition = partition_vocab(tokens, rules);

  struct ModelNorms {
    std::string model;
    std::map<std::string, NormDistribution> norms;
  };
  std::vector<ModelNorms> results;
  for (const auto& p : o.dumps) {
    const auto dump = parse_dump(p);
    results.push_back({dump.model_name, embedding_norms(dump, partition)});
  }

  OutputDir dir(o.out_dir);
  dir.write("partition.json", reports::partition_json(partition));
  json docs = json::array();
  std::string table;
  std::string csv;
  std::string plot;
  for (const auto& r : results) {
    const auto token = file_token(r.model);
    auto doc = reports::norms_json(r.model, r.norms);
    const auto distances = reports::distances_csv(r.norms);
    const auto histogram = reports::histogram_plotdata(r.norms);
    dir.write("norms_" + token + ".json", doc);
    dir.write("distances_" + token + ".csv", distances);
    dir.write("norms_" + token + ".dat", histogram);
    docs.push_back(std::move(doc));
    csv += "# " + r.model + "\n" + distances;
    plot += "# model " + r.model + "\n" + histogram;
    table += r.model + "\n";
    for (const auto& [language, d] : r.norms) {
      table += "  " + language + ": count=" + std::to_string(d.count) +
               (d.empty() ? " (empty)" : " mean=" + reports::fixed(d.mean, 4) + " std=" + reports::fixed(d.std, 4)) + "\n";
    }
    table += distances;
  }
  write_manifest(dir, "norms", argv, concat(o.dumps, {o.vocab, o.rules}),
                 {{"mode", to_string(rules.mode)}, {"min_letters", rules.min_letters},
                  {"detok_markers", rules.detok_markers}, {"script_map", rules.script_map}},
                 o.seed);
  emit(out, o.format, table, docs, csv, plot);
  return 0;
}

int cmd_homogeneity(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  const auto specs = read_parallel_manifest(o.manifest);
  std::vector<HomogeneityProfile> profiles;
  for (const auto& p : o.dumps) profiles.push_back(profile(parse_dump(p), specs));
  std::vector<ProfileComparison> comparisons;
  for (std::size_t i = 1; i < profiles.size(); ++i) comparisons.push_back(compare_profiles(profiles[0], profiles[i]));

  OutputDir dir(o.out_dir);
  json docs = json::object();
  docs["profiles"] = json::array();
  docs["comparisons"] = json::array();
  std::string csv;
  std::string table = "model  mean  std  min  max\n";
  for (const auto& p : profiles) {
    const auto token = file_token(p.model_name);
    auto doc = reports::profile_json(p);
    dir.write("profile_" + token + ".json", doc);
    dir.write("scores_" + token + ".csv", reports::scores_csv(p));
    docs["profiles"].push_back(std::move(doc));
    csv += "# " + p.model_name + "\n" + reports::scores_csv(p);
    table += p.model_name + "  " + reports::fixed(p.mean, 6) + "  " + reports::fixed(p.std, 6) + "  " +
             reports::fixed(p.min, 6) + "  " + reports::fixed(p.max, 6) + "\n";
  }
  for (const auto& c : comparisons) {
    auto doc = reports::comparison_json(c);
    dir.write("comparison_" + file_token(c.tuned_model) + "_vs_" + file_token(c.base_model) + ".json", doc);
    docs["comparisons"].push_back(std::move(doc));
    table += c.tuned_model + " vs " + c.base_model + ": mean_shift=" + reports::fixed(c.mean_shift, 6, true) +
             " fraction_more_homogeneous=" + reports::fixed(c.fraction_tuned_higher, 4) + "\n";
  }
  const auto plot = reports::homogeneity_plotdata(profiles);
  dir.write("homogeneity.dat", plot);
  write_manifest(dir, "homogeneity", argv, concat(o.dumps, {o.manifest}), {{"base", profiles.front().model_name}}, o.seed);
  emit(out, o.format, table, docs, csv, plot);
  return 0;
}

std::vector<RewardRecord> load_all_rewards(const std::vector<std::string>& paths) {
  std::vector<RewardRecord> all;
  for (const auto& p : paths) {
    auto rows = read_rewards(p);
    all.insert(all.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  return all;
}

int cmd_bench(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  const auto rewards = load_all_rewards(o.rewards);
  const auto pairs = read_pairs(o.pairs);
  std::set<std::string> models;
  if (!o.model.empty()) {
    models.insert(o.model);
  } else {
    for (const auto& r : rewards) models.insert(r.model_name);
  }
  std::map<std::string, std::vector<PreferencePair>> by_language;
  for (const auto& p : pairs) by_language[p.language].push_back(p);

  std::vector<BenchResult> results;
  for (const auto& m : models)
    for (const auto& [language, subset] : by_language) results.push_back(score_pairs(rewards, subset, m));

  OutputDir dir(o.out_dir);
  json docs = json::array();
  for (const auto& r : results) docs.push_back(reports::bench_json(r));
  const auto table = reports::bench_table(results);
  const auto csv = reports::bench_csv(results);
  dir.write("bench.json", docs);
  dir.write("bench.csv", csv);
  dir.write("bench.txt", table);
  write_manifest(dir, "bench", argv, concat(o.rewards, {o.pairs}), {{"model", o.model}, {"tie_policy", "strict"}}, o.seed);
  emit(out, o.format, table, docs, csv, table);
  return 0;
}

int cmd_delta(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  const auto rewards = load_all_rewards(o.rewards);
  const auto pairs = read_pairs(o.pairs);
  const auto row = delta_table(score_pairs(rewards, pairs, o.english_model), score_pairs(rewards, pairs, o.target_model));

  OutputDir dir(o.out_dir);
  const auto doc = reports::delta_json(row);
  const auto table = reports::delta_text(row);
  const auto csv = reports::delta_csv(row);
  dir.write("delta.json", doc);
  dir.write("delta.csv", csv);
  dir.write("delta.txt", table);
  write_manifest(dir, "delta", argv, concat(o.rewards, {o.pairs}),
                 {{"english_model", o.english_model}, {"target_model", o.target_model}}, o.seed);
  emit(out, o.format, table, doc, csv, table);
  return 0;
}

int cmd_fit_head(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  if (o.dumps.size() != 1) throw ValidationError("fit-head takes exactly one --dump");
  const auto dump = parse_dump(o.dumps.front());
  const auto features = features_from_dump(dump);
  const auto keys = key_pairs_for(read_pairs(o.pairs));
  FitConfig config{o.seed, o.learning_rate, o.epochs, o.batch_size, o.l2};
  const auto fit = fit_head(features, keys, config);
  const double accuracy = pair_accuracy(fit.head, features, keys);

  OutputDir dir(o.out_dir);
  const auto doc = reports::fit_json(fit, config, accuracy);
  const auto history = reports::loss_history_csv(fit);
  write_dump(head_to_dump(fit.head, dump.model_name + "-head"), dir / "head.xrmd");
  dir.write("fit.json", doc);
  dir.write("loss_history.csv", history);
  write_manifest(dir, "fit-head", argv, concat(o.dumps, {o.pairs}), doc["config"], o.seed);
  const std::string table = "pairs=" + std::to_string(keys.size()) + " final_loss=" +
                            reports::fixed(fit.loss_history.back(), 6) + " train_accuracy=" +
                            reports::fixed(accuracy, 4) + "\n";
  emit(out, o.format, table, doc, history, history);
  return 0;
}

int cmd_pairs(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  auto rewards = load_all_rewards(o.rewards);
  if (!o.model.empty()) {
    std::erase_if(rewards, [&](const RewardRecord& r) { return r.model_name != o.model; });
  }
  const auto responses = read_responses(o.responses);
  const auto result = best_of_n_pairs(rewards, responses, o.n_expected);

  OutputDir dir(o.out_dir);
  write_pairs(dir / "pairs.jsonl", result.pairs);
  const auto doc = reports::best_of_n_json(result);
  dir.write("pairs_report.json", doc);
  write_manifest(dir, "pairs", argv, concat(o.rewards, {o.responses}),
                 {{"model", o.model}, {"n_expected", o.n_expected}, {"tie_break", "lowest response_id"}}, o.seed);
  const std::string table = "pairs=" + std::to_string(result.pairs.size()) + " skipped_ties=" +
                            std::to_string(result.skipped_ties.size()) + " skipped_too_few=" +
                            std::to_string(result.skipped_too_few.size()) + " skipped_identical_text=" +
                            std::to_string(result.skipped_identical_text.size()) + "\n";
  emit(out, o.format, table, doc, table, table);
  return 0;
}

int cmd_winrate(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  const auto instances = read_judge_instances(o.instances);
  JudgeConfig config;
  config.endpoint = o.endpoint;
  config.model = o.judge_model;
  if (!o.judge_template.empty()) config.judge_template = JudgeTemplate::load(o.judge_template);
  config.seed = o.seed;
  config.concurrency = o.concurrency;
  config.requests_per_second = o.rate;
  config.burst = std::max(1.0, static_cast<double>(o.concurrency));
  config.max_retries = o.retries;
  config.timeout = std::chrono::duration<double>(o.timeout);
  config.backoff_base = std::chrono::duration<double>(o.backoff);
  config.load_api_key_from_env();

  OutputDir dir(o.out_dir);
  config.verdict_store = o.verdicts.empty() ? dir / "verdicts.jsonl" : fs::path(o.verdicts);
  const auto evaluation = evaluate(instances, config);
  const auto doc = reports::winrate_json(evaluation, config);
  dir.write("winrate.json", doc);
  write_manifest(dir, "winrate", argv, {o.instances, o.judge_template}, doc["judge"], o.seed);
  const auto& w = evaluation.win_rate;
  const std::string table = "wins=" + std::to_string(w.wins) + " losses=" + std::to_string(w.losses) +
                            " ties=" + std::to_string(w.ties) + " errors=" + std::to_string(w.errors) +
                            " rate=" + reports::fixed(w.rate, 4) + "\n";
  emit(out, o.format, table, doc, table, table);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-lingual reward-model diagnostics", "xrm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  app.failure_message(CLI::FailureMessage::help);
  Options o;

  auto common = [&](CLI::App* sub, const std::string& default_format) {
    o.format = default_format;
    sub->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--format", o.format, "Standard-output format")
        ->check(CLI::IsMember({"json", "csv", "table", "plotdata"}));
    sub->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  };

  auto* inspect = app.add_subcommand("inspect", "Summarize XRMD dumps");
  inspect->add_option("--dump", o.dumps, "XRMD file")->required()->check(CLI::ExistingFile);
  common(inspect, "table");

  auto* norms = app.add_subcommand("norms", "Per-language token-embedding norm distributions");
  norms->add_option("--dump", o.dumps, "XRMD file with an embeddings tensor")->required()->check(CLI::ExistingFile);
  norms->add_option("--vocab", o.vocab, "Vocabulary JSON {\"tokens\": [...]}")->required()->check(CLI::ExistingFile);
  norms->add_option("--rules", o.rules, "Classification rules JSON")->check(CLI::ExistingFile);
  common(norms, "table");

  auto* homog = app.add_subcommand("homogeneity", "Singular-value homogeneity of parallel hidden states");
  homog->add_option("--dump", o.dumps, "XRMD file; the first is the base model")->required()->check(CLI::ExistingFile);
  homog->add_option("--manifest", o.manifest, "Parallel manifest JSONL")->required()->check(CLI::ExistingFile);
  common(homog, "table");

  auto* bench = app.add_subcommand("bench", "Pairwise preference accuracy per category");
  bench->add_option("--rewards", o.rewards, "Rewards JSONL")->required()->check(CLI::ExistingFile);
  bench->add_option("--pairs", o.pairs, "Pairs JSONL")->required()->check(CLI::ExistingFile);
  bench->add_option("--model", o.model, "Score only this model");
  common(bench, "table");

  auto* delta = app.add_subcommand("delta", "English-RM minus target-RM accuracy table");
  delta->add_option("--rewards", o.rewards, "Rewards JSONL")->required()->check(CLI::ExistingFile);
  delta->add_option("--pairs", o.pairs, "Pairs JSONL")->required()->check(CLI::ExistingFile);
  delta->add_option("--english-model", o.english_model, "Model name of the English RM")->required();
  delta->add_option("--target-model", o.target_model, "Model name of the target-language RM")->required();
  common(delta, "table");

  auto* fit = app.add_subcommand("fit-head", "Fit a Bradley-Terry linear head on exported features");
  fit->add_option("--dump", o.dumps, "XRMD file with hidden/{pair_id}/{chosen|rejected}/feat tensors")
      ->required()->check(CLI::ExistingFile);
  fit->add_option("--pairs", o.pairs, "Pairs JSONL")->required()->check(CLI::ExistingFile);
  fit->add_option("--lr", o.learning_rate, "Learning rate")->capture_default_str();
  fit->add_option("--epochs", o.epochs, "Epochs")->capture_default_str()->check(CLI::PositiveNumber);
  fit->add_option("--batch-size", o.batch_size, "Mini-batch size, 0 for full batch")->capture_default_str();
  fit->add_option("--l2", o.l2, "L2 penalty")->capture_default_str();
  common(fit, "table");

  auto* pairs = app.add_subcommand("pairs", "Best-of-N preference pairs from scored responses");
  pairs->add_option("--rewards", o.rewards, "Rewards JSONL")->required()->check(CLI::ExistingFile);
  pairs->add_option("--responses", o.responses, "Responses JSONL")->required()->check(CLI::ExistingFile);
  pairs->add_option("--model", o.model, "Use rewards from this model only");
  pairs->add_option("--n-expected", o.n_expected, "Expected responses per prompt")->capture_default_str();
  common(pairs, "table");

  auto* winrate = app.add_subcommand("winrate", "Win rate against references via an LLM judge");
  winrate->add_option("--instances", o.instances, "Judge-instance JSONL")->required()->check(CLI::ExistingFile);
  winrate->add_option("--endpoint", o.endpoint, "Chat-completions URL")->required();
  winrate->add_option("--judge-model", o.judge_model, "Judge model name")->required();
  winrate->add_option("--template", o.judge_template, "Judge template file")->check(CLI::ExistingFile);
  winrate->add_option("--verdicts", o.verdicts, "Verdict store (default: OUT/verdicts.jsonl)");
  winrate->add_option("--concurrency", o.concurrency, "Max in-flight requests")->capture_default_str();
  winrate->add_option("--rate", o.rate, "Requests per second, 0 for unlimited")->capture_default_str();
  winrate->add_option("--retries", o.retries, "Retries per instance")->capture_default_str();
  winrate->add_option("--timeout", o.timeout, "Per-request timeout in seconds")->capture_default_str();
  winrate->add_option("--backoff", o.backoff, "First retry delay in seconds")->capture_default_str();
  common(winrate, "table");

  // CLI11 consumes arguments from the back.
  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return 1;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (name == "inspect") return cmd_inspect(o, argv, out);
    if (name == "norms") return cmd_norms(o, argv, out);
    if (name == "homogeneity") return cmd_homogeneity(o, argv, out);
    if (name == "bench") return cmd_bench(o, argv, out);
    if (name == "delta") return cmd_delta(o, argv, out);
    if (name == "fit-head") return cmd_fit_head(o, argv, out);
    if (name == "pairs") return cmd_pairs(o, argv, out);
    if (name == "winrate") return cmd_winrate(o, argv, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const RunFailedError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 1;
}

}  // namespace xrm::cli
