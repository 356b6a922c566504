#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/error.hpp"
#include "soda/fs.hpp"
#include "soda/hash.hpp"

namespace soda::llm {

using json = nlohmann::json;

struct CompletionRequest {
  std::string system_text;
  std::string user_text;
  double temperature = 0.0;
  int max_tokens = 1024;
  /// "<base>#<attempt>"; scripted backends key their sequences on it.
  std::string seed_tag;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
  virtual std::string backend_id() const = 0;
};

inline std::string make_seed_tag(const std::string& base, int attempt) { return base + "#" + std::to_string(attempt); }

/// Splits "<base>#<attempt>"; a tag without '#' is attempt 0.
inline std::pair<std::string, int> split_seed_tag(const std::string& tag) {
  const auto pos = tag.rfind('#');
  if (pos == std::string::npos) return {tag, 0};
  try {
    return {tag.substr(0, pos), std::stoi(tag.substr(pos + 1))};
  } catch (const std::exception&) {
    return {tag, 0};
  }
}

/// Hash of every request input except the seed tag.
inline std::string request_key(const CompletionRequest& r) {
  const json j{{"system", r.system_text}, {"user", r.user_text}, {"temperature", r.temperature}, {"max_tokens", r.max_tokens}};
  return sha256_hex(j.dump());
}

/// Deterministic backend replaying canned responses.
///
/// A response sequence is looked up first by the seed tag's base, then by
/// request_key(). The attempt number in the tag picks the element; past the
/// end the last element repeats. Requests with no script go to the fallback
/// responder, or fail with BackendError when there is none.
class ScriptedMock : public LlmBackend {
 public:
  using Responder = std::function<std::string(const CompletionRequest&)>;

  ScriptedMock() = default;
  explicit ScriptedMock(Responder fallback) : fallback_(std::move(fallback)) {}

  void script(const std::string& key, std::vector<std::string> responses) {
    std::lock_guard lock(mu_);
    scripts_[key] = std::move(responses);
  }

  std::string complete(const CompletionRequest& request) override {
    calls_.fetch_add(1);
    const auto [base, attempt] = split_seed_tag(request.seed_tag);
    const std::vector<std::string>* seq = nullptr;
    {
      std::lock_guard lock(mu_);
      if (auto it = scripts_.find(base); !base.empty() && it != scripts_.end()) {
        seq = &it->second;
      } else if (auto jt = scripts_.find(request_key(request)); jt != scripts_.end()) {
        seq = &jt->second;
      }
    }
    if (seq && !seq->empty()) {
      const auto i = std::min<std::size_t>(static_cast<std::size_t>(std::max(attempt, 0)), seq->size() - 1);
      return (*seq)[i];
    }
    if (fallback_) return fallback_(request);
    fail(ErrorCode::BackendError, "no scripted response for " + (base.empty() ? request_key(request) : base));
  }

  std::string backend_id() const override { return "scripted-mock"; }

  std::size_t calls() const { return calls_.load(); }
  void reset_calls() { calls_.store(0); }

 private:
  std::mutex mu_;
  std::map<std::string, std::vector<std::string>> scripts_;
  Responder fallback_;
  std::atomic<std::size_t> calls_{0};
};

/// OpenAI-compatible chat-completions configuration.
struct RemoteChatConfig {
  std::string url;  // full endpoint, e.g. https://host/v1/chat/completions
  std::string api_key;
  std::string model = "gpt-3.5-turbo";
  fs::path audit_log;
  double max_requests_per_second = 2.0;
  int timeout_seconds = 60;

  /// SODA_LLM_URL and SODA_LLM_KEY; empty fields stay empty.
  static RemoteChatConfig from_env() {
    RemoteChatConfig c;
    if (const char* u = std::getenv("SODA_LLM_URL")) c.url = u;
    if (const char* k = std::getenv("SODA_LLM_KEY")) c.api_key = k;
    if (const char* m = std::getenv("SODA_LLM_MODEL")) c.model = m;
    return c;
  }
};

struct ParsedUrl {
  std::string scheme_host_port;  // "https://host:443"
  std::string path;
};

inline ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  require(scheme_end != std::string::npos, ErrorCode::InvalidArgument, "URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline json chat_request_body(const RemoteChatConfig& cfg, const CompletionRequest& r) {
  return {{"model", cfg.model},
          {"messages", json::array({{{"role", "system"}, {"content", r.system_text}},
                                    {{"role", "user"}, {"content", r.user_text}}})},
          {"temperature", r.temperature},
          {"max_tokens", r.max_tokens}};
}

inline std::string chat_response_text(const std::string& body) {
  const auto j = json::parse(body);
  return j.at("choices").at(0).at("message").at("content").get<std::string>();
}

/// Appends one JSON line per backend call. Thread-safe.
class AuditLog {
 public:
  explicit AuditLog(fs::path path) : path_(std::move(path)) {}

  void append(const json& entry) {
    if (path_.empty()) return;
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot open audit log " + path_.string());
    out << entry.dump() << '\n';
  }

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::mutex mu_;
};

/// Spaces calls at least 1/rate seconds apart.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second) : interval_(per_second > 0 ? 1.0 / per_second : 0.0) {}

  void acquire() {
    std::unique_lock lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    auto slot = std::max(now, next_);
    next_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(interval_));
    lock.unlock();
    std::this_thread::sleep_until(slot);
  }

 private:
  double interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

/// HTTP transport, injected so the client can be exercised without a network.
/// Returns (status, body); throws on connection failure.
using HttpPost = std::function<std::pair<int, std::string>(const ParsedUrl&, const std::string& api_key,
                                                           const std::string& body, int timeout_seconds)>;

class RemoteChat : public LlmBackend {
 public:
  RemoteChat(RemoteChatConfig cfg, HttpPost post)
      : cfg_(std::move(cfg)), post_(std::move(post)), audit_(cfg_.audit_log), limiter_(cfg_.max_requests_per_second) {
    require(!cfg_.url.empty(), ErrorCode::InvalidArgument, "remote backend needs SODA_LLM_URL");
    url_ = parse_url(cfg_.url);
  }

  std::string complete(const CompletionRequest& request) override {
    limiter_.acquire();
    const json body = chat_request_body(cfg_, request);
    json entry{{"seed_tag", request.seed_tag}, {"request", body}};
    try {
      const auto [status, text] = post_(url_, cfg_.api_key, body.dump(), cfg_.timeout_seconds);
      entry["status"] = status;
      entry["response"] = text;
      if (status < 200 || status >= 300) {
        audit_.append(entry);
        fail(ErrorCode::BackendError, "chat endpoint returned HTTP " + std::to_string(status));
      }
      std::string content;
      try {
        content = chat_response_text(text);
      } catch (const json::exception& e) {
        entry["error"] = e.what();
        audit_.append(entry);
        fail(ErrorCode::BackendError, std::string("unreadable chat response: ") + e.what());
      }
      audit_.append(entry);
      return content;
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      entry["error"] = e.what();
      audit_.append(entry);
      fail(ErrorCode::BackendError, std::string("chat request failed: ") + e.what());
    }
  }

  std::string backend_id() const override { return "remote:" + cfg_.model; }

 private:
  RemoteChatConfig cfg_;
  HttpPost post_;
  ParsedUrl url_;
  AuditLog audit_;
  RateLimiter limiter_;
};

}  // namespace soda::llm
