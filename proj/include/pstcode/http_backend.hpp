#pragma once

#include <chrono>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "pstcode/backend.hpp"
#include "pstcode/error.hpp"

namespace pstcode {

/// OpenAI-style chat-completions client. The endpoint is the full URL of the
/// completions route, e.g. https://api.example.com/v1/chat/completions.
class HttpChatBackend : public Backend {
public:
  HttpChatBackend(const std::string& endpoint, std::string credential,
                  std::chrono::seconds timeout = std::chrono::seconds(60))
      : credential_(std::move(credential)), timeout_(timeout) {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos)
      throw ConfigError("endpoint must start with http:// or https://");
    auto path_start = endpoint.find('/', scheme_end + 3);
    base_ = endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
  }

  std::string complete(const ChatRequest& r) override {
    httplib::Client cli(base_);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_write_timeout(timeout_);
    httplib::Headers headers{{"Authorization", "Bearer " + credential_}};
    auto res = cli.Post(path_, headers, r.wire_body().dump(), "application/json");
    if (!res)
      throw TransportError("request to " + base_ + " failed: " +
                           httplib::to_string(res.error()));
    if (res->status != 200)
      throw TransportError("HTTP " + std::to_string(res->status) + " from " + base_);
    try {
      auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed completion body: ") + e.what());
    }
  }

private:
  std::string base_;
  std::string path_;
  std::string credential_;
  std::chrono::seconds timeout_;
};

}  // namespace pstcode
