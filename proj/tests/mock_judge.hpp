#pragma once

// A scripted chat-completions endpoint on localhost. By default the judge
// prefers the longer of the two outputs; per-instruction scripts can inject
// HTTP errors or garbage replies ahead of that.

#include <atomic>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace mock {

struct Scripted {
  int status = 200;
  std::string reply;  // content, used when status == 200
};

inline std::string between(const std::string& text, const std::string& open, const std::string& close,
                           std::size_t& from) {
  const auto a = text.find(open, from);
  if (a == std::string::npos) return {};
  const auto b = text.find(close, a + open.size());
  if (b == std::string::npos) return {};
  from = b + close.size();
  return text.substr(a + open.size(), b - a - open.size());
}

class MockJudge {
 public:
  explicit MockJudge(std::string api_key) : api_key_(std::move(api_key)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockJudge() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

  void script(const std::string& instruction, std::deque<Scripted> replies) {
    std::lock_guard lock(mutex_);
    scripts_[instruction] = std::move(replies);
  }

  std::size_t requests() const { return requests_; }
  std::map<std::string, int> requests_by_instruction() const {
    std::lock_guard lock(mutex_);
    return by_instruction_;
  }
  nlohmann::json last_body() const {
    std::lock_guard lock(mutex_);
    return last_body_;
  }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    ++requests_;
    if (req.get_header_value("Authorization") != "Bearer " + api_key_) {
      res.status = 401;
      res.set_content(R"({"error":"unauthorized"})", "application/json");
      return;
    }
    const auto body = nlohmann::json::parse(req.body);
    const std::string prompt = body.at("messages").back().at("content").get<std::string>();
    std::size_t pos = 0;
    const std::string instruction = between(prompt, "\"instruction\": \"\"\"", "\"\"\"", pos);
    const std::string out1 = between(prompt, "\"output\": \"\"\"", "\"\"\"", pos);
    const std::string out2 = between(prompt, "\"output\": \"\"\"", "\"\"\"", pos);

    Scripted answer{200, out1.size() > out2.size() ? "m" : "M"};
    {
      std::lock_guard lock(mutex_);
      last_body_ = body;
      ++by_instruction_[instruction];
      auto it = scripts_.find(instruction);
      if (it != scripts_.end() && !it->second.empty()) {
        answer = it->second.front();
        it->second.pop_front();
      }
    }
    res.status = answer.status;
    if (answer.status != 200) {
      res.set_content(R"({"error":"scripted failure"})", "application/json");
      return;
    }
    const nlohmann::json reply = {
        {"id", "mock"},
        {"object", "chat.completion"},
        {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", answer.reply}}}}}}};
    res.set_content(reply.dump(), "application/json");
  }

  std::string api_key_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::map<std::string, std::deque<Scripted>> scripts_;
  std::map<std::string, int> by_instruction_;
  nlohmann::json last_body_;
  std::atomic<std::size_t> requests_{0};
};

}  // namespace mock
