#include <atomic>
#include <cstdlib>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "pstcode/annotator.hpp"
#include "pstcode/http_backend.hpp"

using namespace pstcode;

namespace {

const Codebook& cb() {
  static const Codebook c = Codebook::load(std::string(PSTCODE_DATA_DIR) + "/codebook/pst_v1.toml");
  return c;
}

std::string completion(const std::string& content) {
  nlohmann::json j;
  j["choices"] = nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}});
  return j.dump();
}

/// Local chat-completions server whose handler is supplied by the test.
class FakeServer {
public:
  explicit FakeServer(std::function<void(const httplib::Request&, httplib::Response&)> h) {
    svr_.Post("/v1/chat/completions", std::move(h));
    port_ = svr_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
  }
  ~FakeServer() {
    svr_.stop();
    thread_.join();
  }
  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }

private:
  httplib::Server svr_;
  int port_ = 0;
  std::thread thread_;
};

std::vector<Utterance> one() {
  return parse_transcript(
      R"({"session_id":"s","speaker":"therapist","text":"What are the facts of the situation here?"})");
}

}  // namespace

TEST(Http, RetriesGarbageUntilValid) {
  std::atomic<int> hits{0};
  std::string auth, model;
  FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    model = nlohmann::json::parse(req.body).at("model").get<std::string>();
    int n = ++hits;
    res.set_content(completion(n <= 2 ? "beats me" : R"({"ps_core":"Defining Problems and Goals","facilitative":"None"})"),
                    "application/json");
  });
  HttpChatBackend backend(server.endpoint(), "secret-token");
  AnnotateOptions opt;
  opt.model_id = "test-model";
  opt.retry_limit = 2;
  auto u = one();
  auto recs = annotate_corpus(u, u, cb(), backend, opt);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].status, RecordStatus::Ok);
  EXPECT_EQ(recs[0].attempts, 3);
  EXPECT_EQ(recs[0].label->ps, PsCoreStrategy::DefineProblemsGoals);
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(auth, "Bearer secret-token");
  EXPECT_EQ(model, "test-model");
}

TEST(Http, ServerErrorsBecomeFailedRecords) {
  std::atomic<int> hits{0};
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
  });
  HttpChatBackend backend(server.endpoint(), "k");
  AnnotateOptions opt;
  opt.retry_limit = 1;
  auto u = one();
  auto recs = annotate_corpus(u, u, cb(), backend, opt);
  EXPECT_EQ(recs[0].status, RecordStatus::Failed);
  EXPECT_EQ(recs[0].attempts, 2);
  EXPECT_EQ(hits.load(), 2);
}

TEST(Http, MalformedBodyIsTransportError) {
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"nope\":1}", "application/json");
  });
  HttpChatBackend backend(server.endpoint(), "k");
  ChatRequest req;
  req.model = "m";
  EXPECT_THROW(backend.complete(req), TransportError);
}

TEST(Http, UnreachableEndpointIsTransportError) {
  HttpChatBackend backend("http://127.0.0.1:1/v1/chat/completions", "k", std::chrono::seconds(2));
  ChatRequest req;
  EXPECT_THROW(backend.complete(req), TransportError);
  EXPECT_THROW(HttpChatBackend("localhost/v1", "k"), ConfigError);
}

TEST(Http, CredentialComesFromEnvironment) {
  BackendConfig c;
  c.kind = BackendKind::HttpChat;
  c.endpoint = "http://127.0.0.1:9/v1/chat/completions";
  c.credential_env = "PSTCODE_TEST_CREDENTIAL";
  ::unsetenv("PSTCODE_TEST_CREDENTIAL");
  EXPECT_THROW(c.validate(), ConfigError);
  ::setenv("PSTCODE_TEST_CREDENTIAL", "abc", 1);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.credential(), "abc");
  ::unsetenv("PSTCODE_TEST_CREDENTIAL");
}
