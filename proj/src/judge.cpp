#include "xrm/judge.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "xrm/errors.hpp"

namespace xrm {
namespace {

using nlohmann::json;

constexpr std::string_view kImStart = "<|im_start|>";
constexpr std::string_view kImEnd = "<|im_end|>";

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string trim_label(std::string_view s) {
  constexpr std::string_view kStrip = " \t\r\n\"'`";
  const auto b = s.find_first_not_of(kStrip);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kStrip);
  return std::string(s.substr(b, e - b + 1));
}

Outcome parse_outcome(std::string_view s) {
  for (Outcome o : {Outcome::win, Outcome::loss, Outcome::tie, Outcome::judge_error}) {
    if (to_string(o) == s) return o;
  }
  throw ValidationError("unknown verdict outcome '" + std::string(s) + "'");
}

Position parse_position(std::string_view s) {
  if (s == to_string(Position::candidate_first)) return Position::candidate_first;
  if (s == to_string(Position::reference_first)) return Position::reference_first;
  throw ValidationError("unknown position assignment '" + std::string(s) + "'");
}

// Blocking token bucket shared by all workers of one evaluation.
class TokenBucket {
 public:
  TokenBucket(double rate, double burst)
      : rate_(rate), capacity_(std::max(1.0, burst)), tokens_(capacity_),
        last_(std::chrono::steady_clock::now()) {}

  void acquire() {
    if (rate_ <= 0.0) return;
    for (;;) {
      std::chrono::duration<double> wait{};
      {
        std::lock_guard lock(mutex_);
        const auto now = std::chrono::steady_clock::now();
        tokens_ = std::min(capacity_, tokens_ + rate_ * std::chrono::duration<double>(now - last_).count());
        last_ = now;
        if (tokens_ >= 1.0) {
          tokens_ -= 1.0;
          return;
        }
        wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      }
      std::this_thread::sleep_for(wait);
    }
  }

 private:
  double rate_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

void require_credential(const JudgeConfig& config) {
  if (config.api_key.empty()) {
    throw ConfigError(std::string("judge credential missing; set ") + kJudgeApiKeyEnv);
  }
}

std::shared_ptr<JudgeTransport> make_transport(const JudgeConfig& config) {
  if (config.transport_factory) return config.transport_factory();
  if (config.endpoint.empty()) throw ConfigError("judge endpoint URL not configured");
  return std::make_shared<HttpTransport>(config.endpoint, config.api_key, config.timeout);
}

}  // namespace

const std::string_view kAlpacaEvalClfTemplate = R"TPL(<|im_start|>system
You are a highly efficient assistant, who evaluates and selects the best large language model (LLMs) based on the quality of their responses to a given instruction. This process will be used to create a leaderboard reflecting the most accurate and human-preferred answers.
<|im_end|>
<|im_start|>user
I require a leaderboard for various large language models. I'll provide you with prompts given to these models and their corresponding outputs. Your task is to assess these responses, and select the model that produces the best output from a human perspective.

## Instruction

{
    "instruction": """{instruction}""",
}

## Model Outputs

Here are the unordered outputs from the models. Each output is associated with a specific model, identified by a unique model identifier.

{
    {
        "model_identifier": "m",
        "output": """{output_1}"""
    },
    {
        "model_identifier": "M",
        "output": """{output_2}"""
    }
}

## Task

Evaluate the models based on the quality and relevance of their outputs, and select the model that generated the best output. Answer by providing the model identifier of the best model. We will use your output as the name of the best model, so make sure your output only contains one of the following model identifiers and nothing else (no quotes, no spaces, no new lines, ...): m or M.

## Best Model Identifier
<|im_end|>
)TPL";

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::win: return "win";
    case Outcome::loss: return "loss";
    case Outcome::tie: return "tie";
    case Outcome::judge_error: return "judge_error";
  }
  return "judge_error";
}

std::string_view to_string(Position p) {
  return p == Position::candidate_first ? "candidate_first" : "reference_first";
}

WinRate aggregate(std::span<const Verdict> verdicts) {
  WinRate w;
  for (const auto& v : verdicts) {
    switch (v.outcome) {
      case Outcome::win: ++w.wins; break;
      case Outcome::loss: ++w.losses; break;
      case Outcome::tie: ++w.ties; break;
      case Outcome::judge_error: ++w.errors; break;
    }
  }
  const std::size_t decided = w.wins + w.losses + w.ties;
  w.rate = decided == 0 ? 0.0
                        : (static_cast<double>(w.wins) + 0.5 * static_cast<double>(w.ties)) /
                              static_cast<double>(decided);
  return w;
}

JudgeTemplate JudgeTemplate::parse(std::string_view text) {
  JudgeTemplate t;
  if (text.find(kImStart) == std::string_view::npos) {
    t.messages.push_back({"user", std::string(text)});
    return t;
  }
  std::size_t pos = 0;
  while ((pos = text.find(kImStart, pos)) != std::string_view::npos) {
    pos += kImStart.size();
    const auto role_end = text.find('\n', pos);
    if (role_end == std::string_view::npos) throw ValidationError("judge template: role line not terminated");
    const auto end = text.find(kImEnd, role_end);
    if (end == std::string_view::npos) throw ValidationError("judge template: missing <|im_end|>");
    std::string content(text.substr(role_end + 1, end - role_end - 1));
    while (!content.empty() && content.back() == '\n') content.pop_back();
    t.messages.push_back({trim_label(text.substr(pos, role_end - pos)), std::move(content)});
    pos = end + kImEnd.size();
  }
  return t;
}

JudgeTemplate JudgeTemplate::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open judge template '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

JudgeTemplate JudgeTemplate::alpaca_eval_default() { return parse(kAlpacaEvalClfTemplate); }

std::vector<ChatMessage> JudgeTemplate::render(std::string_view instruction, std::string_view output_1,
                                               std::string_view output_2) const {
  const std::pair<std::string_view, std::string_view> fills[] = {
      {"{instruction}", instruction}, {"{output_1}", output_1}, {"{output_2}", output_2}};
  std::vector<ChatMessage> out;
  for (const auto& m : messages) {
    std::string rendered;
    std::string_view rest = m.content;
    // Single pass, so placeholder-like text inside the fills stays literal.
    while (!rest.empty()) {
      std::size_t best = std::string_view::npos;
      const std::pair<std::string_view, std::string_view>* which = nullptr;
      for (const auto& f : fills) {
        const auto at = rest.find(f.first);
        if (at < best) {
          best = at;
          which = &f;
        }
      }
      if (!which) {
        rendered.append(rest);
        break;
      }
      rendered.append(rest.substr(0, best));
      rendered.append(which->second);
      rest.remove_prefix(best + which->first.size());
    }
    out.push_back({m.role, std::move(rendered)});
  }
  return out;
}

void JudgeConfig::load_api_key_from_env() {
  const char* key = std::getenv(kJudgeApiKeyEnv);
  if (!key || !*key) throw ConfigError(std::string(kJudgeApiKeyEnv) + " is not set");
  api_key = key;
}

Position assign_position(std::uint64_t seed, std::string_view instance_id) {
  return (splitmix64(seed ^ fnv1a(instance_id)) >> 63) == 0 ? Position::candidate_first
                                                            : Position::reference_first;
}

std::string build_request(const JudgeConfig& config, const std::vector<ChatMessage>& messages) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  json body = {{"model", config.model}, {"messages", std::move(msgs)}, {"temperature", 0}};
  if (config.max_tokens) body["max_tokens"] = *config.max_tokens;
  return body.dump();
}

std::optional<std::string> extract_reply(std::string_view response_body) {
  try {
    const json doc = json::parse(response_body);
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) return std::nullopt;
    return content.get<std::string>();
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

Verdict judge_one(const JudgeInstance& instance, const JudgeConfig& config, JudgeTransport& transport) {
  require_credential(config);
  Verdict v;
  v.instance_id = instance.instance_id;
  v.language = instance.language;
  v.position = assign_position(config.seed, instance.instance_id);
  const bool candidate_first = v.position == Position::candidate_first;
  const auto& tpl = config.judge_template;
  const std::string body = build_request(
      config, tpl.render(instance.prompt, candidate_first ? instance.candidate : instance.reference,
                         candidate_first ? instance.reference : instance.candidate));

  const int attempts = 1 + std::max(0, config.max_retries);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      const auto wait = config.backoff_base * std::pow(2.0, attempt - 1);
      if (config.sleep) {
        config.sleep(wait);
      } else {
        std::this_thread::sleep_for(wait);
      }
    }
    v.retries = attempt;
    const TransportResponse response = transport.post(body);
    if (!response.ok()) {
      v.error = response.error.empty() ? "HTTP status " + std::to_string(response.status) : response.error;
      continue;
    }
    const auto reply = extract_reply(response.body);
    if (!reply) {
      v.error = "response has no choices[0].message.content";
      continue;
    }
    v.raw_judge_label = *reply;
    const std::string label = trim_label(*reply);
    if (label == tpl.first_label || label == tpl.second_label) {
      const bool slot_one = label == tpl.first_label;
      v.outcome = slot_one == candidate_first ? Outcome::win : Outcome::loss;
      v.error.clear();
      return v;
    }
    if (tpl.tie_label && label == *tpl.tie_label) {
      v.outcome = Outcome::tie;
      v.error.clear();
      return v;
    }
    v.error = "unparseable judge label";
  }
  v.outcome = Outcome::judge_error;
  return v;
}

Verdict judge_one(const JudgeInstance& instance, const JudgeConfig& config) {
  require_credential(config);
  auto transport = make_transport(config);
  return judge_one(instance, config, *transport);
}

VerdictStore::VerdictStore(std::filesystem::path path) : path_(std::move(path)) {}

std::map<std::string, Verdict> VerdictStore::load() const {
  std::map<std::string, Verdict> out;
  std::ifstream in(path_);
  if (!in) return out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Verdict v = verdict_from_json(line);
      out.insert_or_assign(v.instance_id, std::move(v));
    } catch (const Error& e) {
      throw ParseError(number, std::string("verdict store: ") + e.what());
    }
  }
  return out;
}

void VerdictStore::append(const Verdict& v) {
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to verdict store '" + path_.string() + "'");
  out << to_jsonl_line(v) << '\n';
  out.flush();
  if (!out) throw IoError("failed writing verdict store '" + path_.string() + "'");
}

std::string to_jsonl_line(const Verdict& v) {
  json obj = {{"instance_id", v.instance_id},
              {"outcome", to_string(v.outcome)},
              {"raw_judge_label", v.raw_judge_label},
              {"position_assignment", to_string(v.position)},
              {"retries", v.retries},
              {"language", v.language}};
  if (!v.error.empty()) obj["error"] = v.error;
  return obj.dump();
}

Verdict verdict_from_json(std::string_view line) {
  try {
    const json obj = json::parse(line);
    Verdict v;
    v.instance_id = obj.at("instance_id").get<std::string>();
    v.outcome = parse_outcome(obj.at("outcome").get<std::string>());
    v.raw_judge_label = obj.value("raw_judge_label", "");
    v.position = parse_position(obj.at("position_assignment").get<std::string>());
    v.retries = obj.value("retries", 0);
    v.language = obj.value("language", "");
    v.error = obj.value("error", "");
    return v;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed verdict: ") + e.what());
  }
}

Evaluation evaluate(const std::vector<JudgeInstance>& instances, const JudgeConfig& config) {
  if (instances.empty()) throw ValidationError("no judge instances");
  require_credential(config);

  std::optional<VerdictStore> store;
  std::map<std::string, Verdict> stored;
  if (config.verdict_store) {
    store.emplace(*config.verdict_store);
    stored = store->load();
  }

  Evaluation result;
  result.verdicts.resize(instances.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (auto it = stored.find(instances[i].instance_id); it != stored.end()) {
      result.verdicts[i] = it->second;
      ++result.resumed;
    } else {
      pending.push_back(i);
    }
  }
  result.requested = pending.size();

  if (!pending.empty()) {
    TokenBucket bucket(config.requests_per_second, config.burst);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const unsigned workers =
        static_cast<unsigned>(std::min<std::size_t>(std::max(1u, config.concurrency), pending.size()));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        try {
          auto transport = make_transport(config);
          for (std::size_t k = next++; k < pending.size(); k = next++) {
            const std::size_t i = pending[k];
            bucket.acquire();
            Verdict v = judge_one(instances[i], config, *transport);
            if (store) store->append(v);
            result.verdicts[i] = std::move(v);
          }
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = pending.size();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  result.win_rate = aggregate(result.verdicts);
  if (result.win_rate.errors == result.verdicts.size()) {
    std::string detail;
    for (const auto& v : result.verdicts) {
      if (!v.error.empty()) {
        detail = v.instance_id + ": " + v.error;
        break;
      }
    }
    throw RunFailedError("all " + std::to_string(result.verdicts.size()) +
                         " judge requests failed (first: " + detail + ")");
  }
  return result;
}

}  // namespace xrm
