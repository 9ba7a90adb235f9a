#pragma once

// JSON-lines sidecars that travel next to XRMD dumps: rewards, preference
// pairs and judge instances. One record per non-empty line; every record
// keeps its 1-based source line for diagnostics (0 when built in memory).

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace xrm {

enum class Category { chat, chat_hard, safety, reasoning, other };

inline constexpr Category kAllCategories[] = {Category::chat, Category::chat_hard,
                                              Category::safety, Category::reasoning,
                                              Category::other};

std::string_view to_string(Category c);
// Throws ValidationError for unknown names.
Category parse_category(std::string_view name);

struct RewardRecord {
  std::string example_id;
  std::string response_id;
  double reward = 0.0;
  std::optional<std::string> language;
  std::string model_name;
  std::size_t line = 0;
};

struct PreferencePair {
  std::string pair_id;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  Category category = Category::other;
  std::string language;
  std::size_t line = 0;
};

struct JudgeInstance {
  std::string instance_id;
  std::string prompt;
  std::string candidate;
  std::string reference;
  std::string language;
  std::size_t line = 0;
};

enum class JsonlKind { rewards, pairs, judge_instances };

using JsonlRecords = std::variant<std::vector<RewardRecord>, std::vector<PreferencePair>,
                                  std::vector<JudgeInstance>>;

// Calls fn(object, line) for every non-blank line. Lines that are not JSON
// objects raise ParseError.
void for_each_jsonl(std::istream& in,
                    const std::function<void(const nlohmann::json&, std::size_t)>& fn);
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const nlohmann::json&, std::size_t)>& fn);

std::vector<RewardRecord> read_rewards(std::istream& in);
std::vector<PreferencePair> read_pairs(std::istream& in);
std::vector<JudgeInstance> read_judge_instances(std::istream& in);

std::vector<RewardRecord> read_rewards(const std::filesystem::path& path);
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path);
std::vector<JudgeInstance> read_judge_instances(const std::filesystem::path& path);

JsonlRecords read_jsonl(const std::filesystem::path& path, JsonlKind kind);

std::string to_jsonl_line(const RewardRecord& r);
std::string to_jsonl_line(const PreferencePair& p);
std::string to_jsonl_line(const JudgeInstance& j);

void write_rewards(const std::filesystem::path& path, std::span<const RewardRecord> rows);
void write_pairs(const std::filesystem::path& path, std::span<const PreferencePair> rows);
void write_judge_instances(const std::filesystem::path& path,
                           std::span<const JudgeInstance> rows);

// Field accessors shared by the other JSONL readers; throw ParseError.
std::string jsonl_string(const nlohmann::json& obj, const char* key, std::size_t line);
std::optional<std::string> jsonl_optional_string(const nlohmann::json& obj, const char* key,
                                                 std::size_t line);

}  // namespace xrm
