// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <gtest/gtest.h>

#include <cstdlib>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "alphaforge/decompiler.hpp"

using namespace alphaforge;

namespace {

/// Local server answering with a scripted status sequence (the last one repeats).
class ScriptedServer {
 public:
  explicit ScriptedServer(std::vector<int> statuses, std::string ok_body)
      : statuses_(std::move(statuses)), ok_body_(std::move(ok_body)) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lk(mu_);
      requests_.push_back(req);
      const int status = statuses_[std::min(requests_.size() - 1, statuses_.size() - 1)];
      res.status = status;
      res.set_content(status == 200 ? ok_body_ : "{\"error\": \"nope\"}", "application/json");
    };
    server_.Post("/v1/chat/completions", handler);
    server_.Post("/v1/embeddings", handler);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ScriptedServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::vector<httplib::Request> requests() {
    std::lock_guard lk(mu_);
    return requests_;
  }

 private:
  httplib::Server server_;
  std::vector<int> statuses_;
  std::string ok_body_;
  std::mutex mu_;
  std::vector<httplib::Request> requests_;
  int port_ = 0;
  std::thread thread_;
};

const std::string kChatOk = R"({"choices": [{"message": {"role": "assistant", "content": "Name: a\nExpression: close\n"}}]})";

HttpOptions options(const std::string& url, std::vector<long long>& sleeps) {
  HttpOptions o;
  o.base_url = url;
  o.model = "test-model";
  o.api_key_env = "AF_TEST_HTTP_KEY";
  o.timeout = std::chrono::seconds(5);
  o.max_retries = 3;
  o.sleep = [&sleeps](std::chrono::milliseconds d) { sleeps.push_back(d.count()); };
  return o;
}

}  // namespace

TEST(HttpChat, RetriesOn500And429ThenSucceeds) {
  ScriptedServer srv({500, 429, 200}, kChatOk);
  ::setenv("AF_TEST_HTTP_KEY", "secret-token", 1);
  std::vector<long long> sleeps;
  HttpChatClient client(options(srv.base_url(), sleeps));
  const std::string reply = client.complete({{Role::kSystem, "sys", true}, {Role::kUser, "idea", true}});
  EXPECT_EQ(reply, "Name: a\nExpression: close\n");
  EXPECT_EQ(sleeps, (std::vector<long long>{1000, 2000}));
  const auto reqs = srv.requests();
  ASSERT_EQ(reqs.size(), 3u);
  EXPECT_EQ(reqs[0].get_header_value("Authorization"), "Bearer secret-token");
  const auto body = nlohmann::json::parse(reqs[0].body);
  EXPECT_EQ(body["model"], "test-model");
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "idea");
  ::unsetenv("AF_TEST_HTTP_KEY");
}

TEST(HttpChat, GivesUpAfterMaxRetriesPlusOneAttempts) {
  ScriptedServer srv({503}, kChatOk);
  std::vector<long long> sleeps;
  HttpChatClient client(options(srv.base_url(), sleeps));
  try {
    client.complete({{Role::kUser, "x", false}});
    FAIL() << "expected a network error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNetwork);
  }
  EXPECT_EQ(srv.requests().size(), 4u);
  EXPECT_EQ(sleeps, (std::vector<long long>{1000, 2000, 4000}));
  EXPECT_TRUE(srv.requests()[0].get_header_value("Authorization").empty());
}

TEST(HttpChat, ClientErrorIsNotRetried) {
  ScriptedServer srv({400}, kChatOk);
  std::vector<long long> sleeps;
  HttpChatClient client(options(srv.base_url(), sleeps));
  EXPECT_THROW(client.complete({{Role::kUser, "x", false}}), Error);
  EXPECT_EQ(srv.requests().size(), 1u);
  EXPECT_TRUE(sleeps.empty());
}

TEST(HttpChat, UnexpectedShapeIsNetworkError) {
  ScriptedServer srv({200}, R"({"choices": []})");
  std::vector<long long> sleeps;
  HttpChatClient client(options(srv.base_url(), sleeps));
  try {
    client.complete({{Role::kUser, "x", false}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNetwork);
  }
}

TEST(HttpChat, TransportFailureRetries) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  std::vector<long long> sleeps;
  auto o = options("http://127.0.0.1:" + std::to_string(port) + "/v1", sleeps);
  o.max_retries = 2;
  o.timeout = std::chrono::seconds(1);
  HttpChatClient client(o);
  EXPECT_THROW(client.complete({{Role::kUser, "x", false}}), Error);
  EXPECT_EQ(sleeps, (std::vector<long long>{1000, 2000}));
}

TEST(HttpChat, BadConfiguration) {
  std::vector<long long> sleeps;
  try {
    HttpChatClient c(options("ftp://example", sleeps));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
  auto o = options("http://127.0.0.1:1", sleeps);
  o.max_retries = -1;
  EXPECT_THROW(HttpChatClient{o}, Error);
}

TEST(RemoteEmbedderTest, NormalizesAndChecksDimension) {
  ScriptedServer srv({200}, R"({"data": [{"embedding": [3.0, 4.0]}]})");
  std::vector<long long> sleeps;
  RemoteEmbedder emb(options(srv.base_url(), sleeps), 2);
  const auto v = emb.embed("hello");
  ASSERT_EQ(v.size(), 2u);
  EXPECT_NEAR(v[0], 0.6f, 1e-6);
  EXPECT_NEAR(v[1], 0.8f, 1e-6);
  EXPECT_EQ(nlohmann::json::parse(srv.requests()[0].body)["input"], "hello");
  RemoteEmbedder wrong(options(srv.base_url(), sleeps), 3);
  EXPECT_THROW(wrong.embed("hello"), Error);
}
