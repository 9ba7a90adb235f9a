#pragma once

// Head-to-head evaluation of candidate responses against references with an
// LLM judge behind an OpenAI-compatible chat-completions endpoint.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xrm/jsonl.hpp"

namespace xrm {

enum class Outcome { win, loss, tie, judge_error };
enum class Position { candidate_first, reference_first };

std::string_view to_string(Outcome o);
std::string_view to_string(Position p);

struct Verdict {
  std::string instance_id;
  Outcome outcome = Outcome::judge_error;
  std::string raw_judge_label;
  Position position = Position::candidate_first;
  int retries = 0;
  std::string language;
  std::string error;  // last failure, empty on success
};

struct WinRate {
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  std::size_t errors = 0;
  // (wins + ties / 2) / (wins + losses + ties); errors are excluded.
  double rate = 0.0;
};

WinRate aggregate(std::span<const Verdict> verdicts);

struct ChatMessage {
  std::string role;
  std::string content;
};

// A judge prompt with {instruction}, {output_1} and {output_2} placeholders.
// Text in <|im_start|>role ... <|im_end|> blocks becomes one message per
// block; plain text becomes a single user message.
struct JudgeTemplate {
  std::vector<ChatMessage> messages;
  std::string first_label = "m";
  std::string second_label = "M";
  std::optional<std::string> tie_label;

  static JudgeTemplate parse(std::string_view text);
  static JudgeTemplate load(const std::filesystem::path& path);
  // The AlpacaEval pairwise classifier prompt.
  static JudgeTemplate alpaca_eval_default();

  std::vector<ChatMessage> render(std::string_view instruction, std::string_view output_1,
                                  std::string_view output_2) const;
};

extern const std::string_view kAlpacaEvalClfTemplate;

struct TransportResponse {
  int status = 0;       // HTTP status, 0 when the request never completed
  std::string body;
  std::string error;    // transport-level failure description

  bool ok() const { return status == 200 && error.empty(); }
};

// Sends one JSON request body; implementations must be callable from several
// threads at once.
class JudgeTransport {
 public:
  virtual ~JudgeTransport() = default;
  virtual TransportResponse post(const std::string& json_body) = 0;
};

// POSTs to an http:// or https:// URL with a bearer credential.
class HttpTransport final : public JudgeTransport {
 public:
  HttpTransport(std::string url, std::string api_key, std::chrono::duration<double> timeout);
  TransportResponse post(const std::string& json_body) override;

 private:
  std::string origin_;
  std::string path_;
  std::string api_key_;
  std::chrono::duration<double> timeout_;
};

inline constexpr const char* kJudgeApiKeyEnv = "XRM_JUDGE_API_KEY";

struct JudgeConfig {
  std::string endpoint;
  std::string model;
  JudgeTemplate judge_template = JudgeTemplate::alpaca_eval_default();
  std::string api_key;
  std::uint64_t seed = 0;
  int max_retries = 3;
  // Wait before retry k (1-based) is backoff_base * 2^(k-1).
  std::chrono::duration<double> backoff_base{1.0};
  std::chrono::duration<double> timeout{60.0};
  unsigned concurrency = 4;
  // Token bucket; a non-positive rate disables limiting.
  double requests_per_second = 0.0;
  double burst = 4.0;
  std::optional<int> max_tokens;
  std::optional<std::filesystem::path> verdict_store;

  std::function<void(std::chrono::duration<double>)> sleep;
  // Defaults to HttpTransport on endpoint.
  std::function<std::shared_ptr<JudgeTransport>()> transport_factory;

  // Reads the credential from XRM_JUDGE_API_KEY; ConfigError when unset.
  void load_api_key_from_env();
};

// Seeded, per-instance and independent of instance order.
Position assign_position(std::uint64_t seed, std::string_view instance_id);

// Chat-completions request body for one rendered prompt.
std::string build_request(const JudgeConfig& config, const std::vector<ChatMessage>& messages);

// choices[0].message.content of a chat-completions response.
std::optional<std::string> extract_reply(std::string_view response_body);

// Transport failures and unparseable labels are retried; after the last
// retry the verdict is judge_error. Throws ConfigError without a credential.
Verdict judge_one(const JudgeInstance& instance, const JudgeConfig& config,
                  JudgeTransport& transport);
Verdict judge_one(const JudgeInstance& instance, const JudgeConfig& config);

// Append-only JSONL verdict log.
class VerdictStore {
 public:
  explicit VerdictStore(std::filesystem::path path);

  // Verdicts already on disk, keyed by instance_id; later lines win.
  std::map<std::string, Verdict> load() const;
  void append(const Verdict& v);

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

std::string to_jsonl_line(const Verdict& v);
Verdict verdict_from_json(std::string_view line);

struct Evaluation {
  std::vector<Verdict> verdicts;  // instance order
  WinRate win_rate;
  std::size_t requested = 0;      // instances judged in this run
  std::size_t resumed = 0;        // instances taken from the store
};

// Judges every instance not already in the verdict store with at most
// config.concurrency requests in flight. Throws ValidationError for an empty
// list, ConfigError without a credential, RunFailedError when every verdict
// is judge_error.
Evaluation evaluate(const std::vector<JudgeInstance>& instances, const JudgeConfig& config);

}  // namespace xrm
