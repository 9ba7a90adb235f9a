#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xrm/errors.hpp"
#include "xrm/judge.hpp"
#include "xrm/log.hpp"

// resolv.h (via httplib) defines _res; keep it after every other header.
#include "mock_judge.hpp"

namespace fs = std::filesystem;
using namespace xrm;

namespace {

std::string completion(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

// Replays scripted replies in order, then repeats the last one.
class FakeTransport final : public JudgeTransport {
 public:
  explicit FakeTransport(std::deque<TransportResponse> replies) : replies_(std::move(replies)) {}
  TransportResponse post(const std::string& body) override {
    std::lock_guard lock(mutex_);
    bodies.push_back(body);
    if (replies_.size() > 1) {
      auto r = replies_.front();
      replies_.pop_front();
      return r;
    }
    return replies_.front();
  }
  std::vector<std::string> bodies;

 private:
  std::mutex mutex_;
  std::deque<TransportResponse> replies_;
};

JudgeInstance instance(const std::string& id, const std::string& candidate = "a fairly long candidate answer",
                       const std::string& reference = "short") {
  return {id, "prompt " + id, candidate, reference, "ko", 0};
}

JudgeConfig config(std::vector<std::chrono::duration<double>>* sleeps = nullptr) {
  JudgeConfig c;
  c.endpoint = "http://127.0.0.1:9/v1/chat/completions";
  c.model = "judge";
  c.api_key = "key";
  c.sleep = [sleeps](std::chrono::duration<double> d) {
    if (sleeps) sleeps->push_back(d);
  };
  return c;
}

// First instance id with the requested assignment under seed 0.
std::string id_with(Position p) {
  for (int i = 0;; ++i) {
    const auto id = "i" + std::to_string(i);
    if (assign_position(0, id) == p) return id;
  }
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("xrm_judge_" + std::to_string(::getpid()) + "_" + name);
}

Verdict verdict(const std::string& id, Outcome o) {
  Verdict v;
  v.instance_id = id;
  v.outcome = o;
  return v;
}

}  // namespace

TEST(JudgeOne, CandidateSlotLabelIsAWin) {
  auto cfg = config();
  for (Position p : {Position::candidate_first, Position::reference_first}) {
    const auto id = id_with(p);
    const std::string candidate_label = p == Position::candidate_first ? "m" : "M";
    FakeTransport t({{200, completion(candidate_label), ""}});
    const auto v = judge_one(instance(id), cfg, t);
    EXPECT_EQ(v.outcome, Outcome::win);
    EXPECT_EQ(v.position, p);
    EXPECT_EQ(v.raw_judge_label, candidate_label);
    EXPECT_EQ(v.retries, 0);
    EXPECT_EQ(v.language, "ko");
  }
}

TEST(JudgeOne, GarbageTwiceThenReferenceLabel) {
  std::vector<std::chrono::duration<double>> sleeps;
  auto cfg = config(&sleeps);
  const auto id = id_with(Position::candidate_first);
  FakeTransport t({{200, completion("I cannot decide"), ""}, {200, completion("both"), ""}, {200, completion("M"), ""}});
  const auto v = judge_one(instance(id), cfg, t);
  EXPECT_EQ(v.outcome, Outcome::loss);
  EXPECT_EQ(v.retries, 2);
  EXPECT_EQ(t.bodies.size(), 3u);
  ASSERT_EQ(sleeps.size(), 2u);
  EXPECT_EQ(sleeps[0].count(), 1.0);
  EXPECT_EQ(sleeps[1].count(), 2.0);
}

TEST(JudgeOne, ExhaustedRetriesGiveJudgeError) {
  std::vector<std::chrono::duration<double>> sleeps;
  auto cfg = config(&sleeps);
  FakeTransport t({{503, "", ""}});
  const auto v = judge_one(instance("x"), cfg, t);
  EXPECT_EQ(v.outcome, Outcome::judge_error);
  EXPECT_EQ(v.retries, 3);
  EXPECT_EQ(t.bodies.size(), 4u);
  EXPECT_FALSE(v.error.empty());
  ASSERT_EQ(sleeps.size(), 3u);
  EXPECT_EQ(sleeps[2].count(), 4.0);
}

TEST(JudgeOne, MissingCredentialSendsNothing) {
  auto cfg = config();
  cfg.api_key.clear();
  FakeTransport t({{200, completion("m"), ""}});
  EXPECT_THROW(judge_one(instance("x"), cfg, t), ConfigError);
  EXPECT_TRUE(t.bodies.empty());
}

TEST(Positions, DeterministicAndBalanced) {
  std::vector<std::string> ids;
  for (int i = 0; i < 4000; ++i) ids.push_back("inst-" + std::to_string(i));
  std::size_t first = 0;
  for (const auto& id : ids) {
    EXPECT_EQ(assign_position(42, id), assign_position(42, id));
    first += assign_position(42, id) == Position::candidate_first;
  }
  const double n = static_cast<double>(ids.size());
  EXPECT_LE(std::abs(static_cast<double>(first) - n / 2.0), 4.0 * std::sqrt(n) / 2.0);

  std::size_t differ = 0;
  for (const auto& id : ids) differ += assign_position(42, id) != assign_position(43, id);
  EXPECT_GT(differ, 1000u);
}

TEST(Aggregate, WorkedExamples) {
  const std::vector<Verdict> a = {verdict("1", Outcome::win), verdict("2", Outcome::win), verdict("3", Outcome::win),
                                  verdict("4", Outcome::loss)};
  EXPECT_EQ(aggregate(a).rate, 0.75);
  const std::vector<Verdict> b = {verdict("1", Outcome::win), verdict("2", Outcome::loss), verdict("3", Outcome::tie),
                                  verdict("4", Outcome::tie), verdict("5", Outcome::judge_error)};
  const auto w = aggregate(b);
  EXPECT_EQ(w.rate, 0.5);
  EXPECT_EQ(w.errors, 1u);
  EXPECT_EQ(w.ties, 2u);
}

TEST(Aggregate, OrderIndependent) {
  std::mt19937_64 rng(9);
  std::vector<Verdict> v;
  for (int i = 0; i < 200; ++i) v.push_back(verdict(std::to_string(i), static_cast<Outcome>(rng() % 4)));
  const auto ref = aggregate(v);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(v.begin(), v.end(), rng);
    const auto w = aggregate(v);
    EXPECT_EQ(w.rate, ref.rate);
    EXPECT_EQ(w.wins, ref.wins);
    EXPECT_EQ(w.errors, ref.errors);
  }
}

TEST(Template, ParseAndRender) {
  const auto t = JudgeTemplate::parse(
      "<|im_start|>system\nBe fair.\n<|im_end|>\n<|im_start|>user\nQ: {instruction}\nA: {output_1}\nB: {output_2}\n<|im_end|>\n");
  ASSERT_EQ(t.messages.size(), 2u);
  EXPECT_EQ(t.messages[0].role, "system");
  EXPECT_EQ(t.messages[0].content, "Be fair.");
  const auto r = t.render("why {output_2}?", "{instruction}", "two");
  EXPECT_EQ(r[1].content, "Q: why {output_2}?\nA: {instruction}\nB: two");

  const auto plain = JudgeTemplate::parse("Compare {output_1} and {output_2}.");
  ASSERT_EQ(plain.messages.size(), 1u);
  EXPECT_EQ(plain.messages[0].role, "user");
  EXPECT_THROW(JudgeTemplate::parse("<|im_start|>user\nunterminated"), ValidationError);
}

TEST(Template, BundledFileMatchesDefault) {
  std::ifstream in(fs::path(XRM_DATA_DIR) / "templates" / "alpaca_eval_clf.txt", std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), std::string(kAlpacaEvalClfTemplate));
  const auto t = JudgeTemplate::alpaca_eval_default();
  EXPECT_EQ(t.first_label, "m");
  EXPECT_EQ(t.second_label, "M");
  const auto r = t.render("INSTR", "ONE", "TWO");
  const auto& last = r.back().content;
  EXPECT_LT(last.find("INSTR"), last.find("ONE"));
  EXPECT_LT(last.find("ONE"), last.find("TWO"));
}

TEST(Wire, RequestAndReply) {
  auto cfg = config();
  cfg.max_tokens = 5;
  const auto body = nlohmann::json::parse(build_request(cfg, {{"user", "hi"}}));
  EXPECT_EQ(body.at("model"), "judge");
  EXPECT_EQ(body.at("temperature"), 0);
  EXPECT_EQ(body.at("max_tokens"), 5);
  EXPECT_EQ(body.at("messages")[0].at("content"), "hi");

  EXPECT_EQ(extract_reply(completion("m")), "m");
  EXPECT_EQ(extract_reply("{}"), std::nullopt);
  EXPECT_EQ(extract_reply("not json"), std::nullopt);
}

TEST(Verdicts, JsonlRoundTrip) {
  Verdict v;
  v.instance_id = "a\"b";
  v.outcome = Outcome::tie;
  v.raw_judge_label = "tie";
  v.position = Position::reference_first;
  v.retries = 2;
  v.language = "zh";
  v.error = "";
  const auto line = to_jsonl_line(v);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const auto back = verdict_from_json(line);
  EXPECT_EQ(back.instance_id, v.instance_id);
  EXPECT_EQ(back.outcome, v.outcome);
  EXPECT_EQ(back.position, v.position);
  EXPECT_EQ(back.retries, v.retries);
  EXPECT_EQ(back.language, v.language);
}

TEST(Env, CredentialFromEnvironment) {
  JudgeConfig c;
  ::unsetenv(kJudgeApiKeyEnv);
  EXPECT_THROW(c.load_api_key_from_env(), ConfigError);
  ::setenv(kJudgeApiKeyEnv, "secret", 1);
  c.load_api_key_from_env();
  EXPECT_EQ(c.api_key, "secret");
  ::unsetenv(kJudgeApiKeyEnv);
}

TEST(Evaluate, Errors) {
  auto cfg = config();
  EXPECT_THROW(evaluate({}, cfg), ValidationError);

  std::atomic<int> made{0};
  auto fake = std::make_shared<FakeTransport>(std::deque<TransportResponse>{{500, "", ""}});
  cfg.transport_factory = [&] {
    ++made;
    return fake;
  };
  cfg.api_key.clear();
  EXPECT_THROW(evaluate({instance("a")}, cfg), ConfigError);
  EXPECT_TRUE(fake->bodies.empty());

  cfg.api_key = "key";
  cfg.max_retries = 0;
  auto quiet = set_log_sink([](std::string_view) {});
  EXPECT_THROW(evaluate({instance("a"), instance("b")}, cfg), RunFailedError);
  set_log_sink(quiet);
  EXPECT_EQ(fake->bodies.size(), 2u);
}

TEST(Http, AgainstMockEndpoint) {
  mock::MockJudge judge("key");
  const std::string body = build_request(config(), {{"user", "hi"}});
  HttpTransport good(judge.url(), "key", std::chrono::seconds(5));
  const auto ok = good.post(body);
  EXPECT_TRUE(ok.ok());
  EXPECT_TRUE(extract_reply(ok.body).has_value());
  EXPECT_EQ(judge.last_body().at("model"), "judge");

  HttpTransport bad(judge.url(), "wrong", std::chrono::seconds(5));
  EXPECT_EQ(bad.post(body).status, 401);

  HttpTransport closed("http://127.0.0.1:1/v1/chat/completions", "key", std::chrono::seconds(2));
  const auto r = closed.post(body);
  EXPECT_FALSE(r.ok());
  EXPECT_FALSE(r.error.empty());
}

TEST(Evaluate, LongerResponseMockAndResume) {
  mock::MockJudge judge("key");
  std::mt19937_64 rng(10);
  std::vector<JudgeInstance> instances;
  std::size_t longer = 0;
  for (int i = 0; i < 60; ++i) {
    const std::string cand(5 + rng() % 40, 'c');
    const std::string ref(5 + rng() % 40, 'r');
    if (cand.size() == ref.size()) continue;
    instances.push_back({"id" + std::to_string(i), "q" + std::to_string(i), cand, ref, "es", 0});
    longer += cand.size() > ref.size();
  }
  const auto store = temp_path("verdicts.jsonl");
  fs::remove(store);

  auto cfg = config();
  cfg.endpoint = judge.url();
  cfg.verdict_store = store;
  cfg.seed = 3;
  const auto half = std::vector<JudgeInstance>(instances.begin(), instances.begin() + 20);
  const auto first = evaluate(half, cfg);
  EXPECT_EQ(first.requested, 20u);
  EXPECT_EQ(judge.requests(), 20u);

  const auto full = evaluate(instances, cfg);
  EXPECT_EQ(full.resumed, 20u);
  EXPECT_EQ(full.requested, instances.size() - 20);
  EXPECT_EQ(judge.requests(), instances.size());
  for (const auto& [instruction, count] : judge.requests_by_instruction()) EXPECT_EQ(count, 1) << instruction;

  EXPECT_EQ(full.verdicts.size(), instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) EXPECT_EQ(full.verdicts[i].instance_id, instances[i].instance_id);
  EXPECT_DOUBLE_EQ(full.win_rate.rate, static_cast<double>(longer) / static_cast<double>(instances.size()));

  const auto again = evaluate(instances, cfg);
  EXPECT_EQ(again.requested, 0u);
  EXPECT_EQ(judge.requests(), instances.size());
  EXPECT_EQ(VerdictStore(store).load().size(), instances.size());
  fs::remove(store);
}

TEST(Evaluate, ScriptedHttpRetries) {
  mock::MockJudge judge("key");
  auto cfg = config();
  cfg.endpoint = judge.url();
  judge.script("q", {{500, ""}, {429, ""}});
  const auto e = evaluate({{"only", "q", "long candidate", "ref", "it", 0}}, cfg);
  EXPECT_EQ(e.verdicts[0].retries, 2);
  EXPECT_EQ(e.verdicts[0].outcome, Outcome::win);
  EXPECT_EQ(judge.requests(), 3u);
}
