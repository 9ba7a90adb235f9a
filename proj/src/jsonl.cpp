#include "xrm/jsonl.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "xrm/errors.hpp"

namespace xrm {
namespace {

using nlohmann::json;

bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

template <typename Row>
void write_lines(const std::filesystem::path& path, std::span<const Row> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create '" + path.string() + "'");
  for (const auto& row : rows) out << to_jsonl_line(row) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string duplicate_message(const std::string& what, std::size_t first, std::size_t second) {
  return "duplicate " + what + " on lines " + std::to_string(first) + " and " +
         std::to_string(second);
}

}  // namespace

std::string_view to_string(Category c) {
  switch (c) {
    case Category::chat: return "chat";
    case Category::chat_hard: return "chat_hard";
    case Category::safety: return "safety";
    case Category::reasoning: return "reasoning";
    case Category::other: return "other";
  }
  return "other";
}

Category parse_category(std::string_view name) {
  for (Category c : kAllCategories) {
    if (to_string(c) == name) return c;
  }
  throw ValidationError("unknown category '" + std::string(name) + "'");
}

void for_each_jsonl(std::istream& in,
                    const std::function<void(const json&, std::size_t)>& fn) {
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (is_blank(text)) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::exception& e) {
      throw ParseError(line, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(line, "expected a JSON object");
    fn(obj, line);
  }
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn) {
  auto in = open_input(path);
  for_each_jsonl(in, fn);
}

std::string jsonl_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError(line, std::string("missing or non-string field '") + key + "'");
  }
  return it->get<std::string>();
}

std::optional<std::string> jsonl_optional_string(const json& obj, const char* key,
                                                 std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError(line, std::string("non-string field '") + key + "'");
  return it->get<std::string>();
}

std::vector<RewardRecord> read_rewards(std::istream& in) {
  std::vector<RewardRecord> rows;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> seen;
  for_each_jsonl(in, [&](const json& obj, std::size_t line) {
    RewardRecord r;
    r.example_id = jsonl_string(obj, "example_id", line);
    r.response_id = jsonl_string(obj, "response_id", line);
    r.model_name = jsonl_string(obj, "model_name", line);
    r.language = jsonl_optional_string(obj, "language", line);
    auto it = obj.find("reward");
    if (it == obj.end() || !it->is_number()) throw ParseError(line, "missing or non-numeric 'reward'");
    r.reward = it->get<double>();
    if (!std::isfinite(r.reward)) throw ValidationError("line " + std::to_string(line) + ": reward is not finite");
    r.line = line;
    auto [pos, inserted] = seen.emplace(std::tuple{r.example_id, r.response_id, r.model_name}, line);
    if (!inserted) {
      throw ValidationError(duplicate_message("reward (" + r.example_id + ", " + r.response_id +
                                                  ", " + r.model_name + ")",
                                              pos->second, line));
    }
    rows.push_back(std::move(r));
  });
  return rows;
}

std::vector<PreferencePair> read_pairs(std::istream& in) {
  std::vector<PreferencePair> rows;
  std::map<std::string, std::size_t> seen;
  for_each_jsonl(in, [&](const json& obj, std::size_t line) {
    PreferencePair p;
    p.pair_id = jsonl_string(obj, "pair_id", line);
    p.prompt = jsonl_string(obj, "prompt", line);
    p.chosen = jsonl_string(obj, "chosen", line);
    p.rejected = jsonl_string(obj, "rejected", line);
    p.language = jsonl_string(obj, "language", line);
    if (auto cat = jsonl_optional_string(obj, "category", line)) {
      try {
        p.category = parse_category(*cat);
      } catch (const ValidationError& e) {
        throw ParseError(line, e.what());
      }
    }
    if (p.chosen == p.rejected) {
      throw ValidationError("line " + std::to_string(line) + ": pair '" + p.pair_id +
                            "' has identical chosen and rejected responses");
    }
    p.line = line;
    auto [pos, inserted] = seen.emplace(p.pair_id, line);
    if (!inserted) throw ValidationError(duplicate_message("pair_id '" + p.pair_id + "'", pos->second, line));
    rows.push_back(std::move(p));
  });
  return rows;
}

std::vector<JudgeInstance> read_judge_instances(std::istream& in) {
  std::vector<JudgeInstance> rows;
  std::map<std::string, std::size_t> seen;
  for_each_jsonl(in, [&](const json& obj, std::size_t line) {
    JudgeInstance j;
    j.instance_id = jsonl_string(obj, "instance_id", line);
    j.prompt = jsonl_string(obj, "prompt", line);
    j.candidate = jsonl_string(obj, "candidate", line);
    j.reference = jsonl_string(obj, "reference", line);
    j.language = jsonl_string(obj, "language", line);
    for (const std::string* field : {&j.instance_id, &j.prompt, &j.candidate, &j.reference, &j.language}) {
      if (field->empty()) throw ValidationError("line " + std::to_string(line) + ": empty judge-instance field");
    }
    j.line = line;
    auto [pos, inserted] = seen.emplace(j.instance_id, line);
    if (!inserted) {
      throw ValidationError(duplicate_message("instance_id '" + j.instance_id + "'", pos->second, line));
    }
    rows.push_back(std::move(j));
  });
  return rows;
}

std::vector<RewardRecord> read_rewards(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_rewards(in);
}

std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_pairs(in);
}

std::vector<JudgeInstance> read_judge_instances(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_judge_instances(in);
}

JsonlRecords read_jsonl(const std::filesystem::path& path, JsonlKind kind) {
  switch (kind) {
    case JsonlKind::rewards: return read_rewards(path);
    case JsonlKind::pairs: return read_pairs(path);
    case JsonlKind::judge_instances: return read_judge_instances(path);
  }
  throw ValidationError("unknown JSONL kind");
}

std::string to_jsonl_line(const RewardRecord& r) {
  json obj = {{"example_id", r.example_id},
              {"response_id", r.response_id},
              {"reward", r.reward},
              {"model_name", r.model_name}};
  if (r.language) obj["language"] = *r.language;
  return obj.dump();
}

std::string to_jsonl_line(const PreferencePair& p) {
  return json{{"pair_id", p.pair_id},   {"prompt", p.prompt},
              {"chosen", p.chosen},     {"rejected", p.rejected},
              {"category", to_string(p.category)}, {"language", p.language}}
      .dump();
}

std::string to_jsonl_line(const JudgeInstance& j) {
  return json{{"instance_id", j.instance_id}, {"prompt", j.prompt},
              {"candidate", j.candidate},     {"reference", j.reference},
              {"language", j.language}}
      .dump();
}

void write_rewards(const std::filesystem::path& path, std::span<const RewardRecord> rows) {
  write_lines(path, rows);
}

void write_pairs(const std::filesystem::path& path, std::span<const PreferencePair> rows) {
  write_lines(path, rows);
}

void write_judge_instances(const std::filesystem::path& path, std::span<const JudgeInstance> rows) {
  write_lines(path, rows);
}

}  // namespace xrm
