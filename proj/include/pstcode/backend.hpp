#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "pstcode/error.hpp"
#include "pstcode/io.hpp"
#include "pstcode/text.hpp"

namespace pstcode {

struct ChatMessage {
  std::string role;
  std::string content;
};

enum class Task { Strategy, Dynamics };

/// One chat-completion request. Only model, messages, temperature and
/// max_tokens go over the wire; the remaining fields describe the job to
/// local backends (mock labelers, replay lookup, fault injection in tests).
struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 500;

  Task task = Task::Strategy;
  std::string target_text;
  int run_id = 1;
  int attempt = 1;
  std::uint64_t seed = 0;

  nlohmann::ordered_json wire_body() const {
    nlohmann::ordered_json j;
    j["model"] = model;
    auto& msgs = j["messages"] = nlohmann::ordered_json::array();
    for (const auto& m : messages)
      msgs.push_back({{"role", m.role}, {"content", m.content}});
    j["temperature"] = temperature;
    j["max_tokens"] = max_tokens;
    return j;
  }

  /// Canonical serialization of the messages, the prompt part of cache keys.
  std::string prompt_bytes() const {
    nlohmann::ordered_json msgs = nlohmann::ordered_json::array();
    for (const auto& m : messages)
      msgs.push_back({{"role", m.role}, {"content", m.content}});
    return msgs.dump();
  }
};

class Backend {
public:
  virtual ~Backend() = default;
  /// Returns the raw model text. Throws TransportError when no response could
  /// be obtained; the caller owns the retry policy.
  virtual std::string complete(const ChatRequest& request) = 0;
};

enum class BackendKind { HttpChat, Replay, Mock };

inline BackendKind parse_backend_kind(std::string_view s) {
  auto k = text::to_lower(s);
  if (k == "http" || k == "httpchat" || k == "http-chat") return BackendKind::HttpChat;
  if (k == "replay") return BackendKind::Replay;
  if (k == "mock") return BackendKind::Mock;
  throw ConfigError("unknown backend '" + std::string(s) +
                    "' (expected http, replay or mock)");
}

inline std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::HttpChat: return "http";
    case BackendKind::Replay: return "replay";
    case BackendKind::Mock: return "mock";
  }
  return "?";
}

struct BackendConfig {
  BackendKind kind = BackendKind::Mock;
  std::string model_id = "mock-keyword-v1";
  double temperature = 0.0;
  int max_tokens = 500;
  std::optional<std::string> endpoint;
  int parallelism = 1;
  int retry_limit = 2;
  std::optional<std::filesystem::path> cache_path;
  std::string credential_env = "PSTCODE_API_KEY";
  /// Per-run probability that the mock labeler perturbs its answer.
  double mock_noise = 0.08;

  void validate() const {
    if (temperature < 0) throw ConfigError("temperature must be >= 0");
    if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
    if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (retry_limit < 0) throw ConfigError("retry_limit must be >= 0");
    if (model_id.empty()) throw ConfigError("model_id must not be empty");
    if (kind == BackendKind::HttpChat) {
      if (!endpoint || endpoint->empty())
        throw ConfigError("http backend requires an endpoint");
      if (!credential())
        throw ConfigError("http backend requires the credential in $" +
                          credential_env);
    }
    if (kind == BackendKind::Replay && !cache_path)
      throw ConfigError("replay backend requires a response cache path");
  }

  std::optional<std::string> credential() const {
    const char* v = std::getenv(credential_env.c_str());
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  }
};

/// JSONL response cache keyed by a SHA-256 of (model, run, prompt bytes).
/// Appends are serialized; lookups see everything stored so far.
class ResponseCache {
public:
  ResponseCache() = default;

  explicit ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    auto lines = io::split_lines(io::read_file(path_));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (text::trim(lines[i]).empty()) continue;
      try {
        auto j = nlohmann::json::parse(lines[i]);
        entries_[j.at("key").get<std::string>()] =
            j.at("response").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(i + 1, std::string("bad cache entry: ") + e.what(),
                         path_.string() + ":" + std::to_string(i + 1));
      }
    }
  }

  static std::string key(const ChatRequest& r) {
    std::string material = r.model;
    material.push_back('\0');
    material += std::to_string(r.run_id);
    material.push_back('\0');
    material += r.prompt_bytes();
    return text::sha256_hex(material);
  }

  std::optional<std::string> lookup(const ChatRequest& r) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key(r));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void store(const ChatRequest& r, const std::string& response) {
    std::lock_guard lock(mu_);
    auto k = key(r);
    entries_[k] = response;
    if (path_.empty()) return;
    if (path_.has_parent_path())
      std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    nlohmann::ordered_json j;
    j["key"] = k;
    j["model"] = r.model;
    j["run_id"] = r.run_id;
    j["response"] = response;
    out << j.dump() << '\n';
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
};

/// Answers only from the cache; a miss is a transport failure.
class ReplayBackend : public Backend {
public:
  explicit ReplayBackend(std::shared_ptr<const ResponseCache> cache)
      : cache_(std::move(cache)) {}

  std::string complete(const ChatRequest& r) override {
    if (auto hit = cache_->lookup(r)) return *hit;
    throw TransportError("replay cache has no response for this request");
  }

private:
  std::shared_ptr<const ResponseCache> cache_;
};

/// Serves cache hits and stores fresh responses from the wrapped backend.
/// Retries (attempt > 1) bypass the cache so a stored bad response is not
/// served again; the fresh response replaces it.
class CachingBackend : public Backend {
public:
  CachingBackend(std::unique_ptr<Backend> inner,
                 std::shared_ptr<ResponseCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}

  std::string complete(const ChatRequest& r) override {
    if (r.attempt == 1)
      if (auto hit = cache_->lookup(r)) return *hit;
    auto response = inner_->complete(r);
    cache_->store(r, response);
    return response;
  }

private:
  std::unique_ptr<Backend> inner_;
  std::shared_ptr<ResponseCache> cache_;
};

}  // namespace pstcode
