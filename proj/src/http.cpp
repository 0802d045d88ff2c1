// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include <json.hpp>

#include "alphaforge/decompiler.hpp"

namespace alphaforge {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // base path without trailing slash
};

Endpoint split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw Error(ErrorCode::kConfig, "invalid base URL '" + url + "'");
  Endpoint e{m[1].str(), m[2].matched ? m[2].str() : ""};
  while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
  return e;
}

void default_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

/// POSTs JSON with retries on transport errors, 429 and 5xx.
nlohmann::json post_json(const HttpOptions& opt, const std::string& suffix, const nlohmann::json& body) {
  const Endpoint ep = split_url(opt.base_url);
  httplib::Client cli(ep.origin);
  cli.set_connection_timeout(opt.timeout);
  cli.set_read_timeout(opt.timeout);
  cli.set_write_timeout(opt.timeout);
  httplib::Headers headers;
  if (const char* key = std::getenv(opt.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string payload = body.dump();
  const auto sleep = opt.sleep ? opt.sleep : default_sleep;
  std::string last_error;
  for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
    if (attempt > 0) sleep(std::chrono::milliseconds(1000LL << (attempt - 1)));
    auto res = cli.Post(ep.path + suffix, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(ErrorCode::kNetwork, "HTTP " + std::to_string(res->status) + " from " + opt.base_url + suffix +
                                           ": " + res->body.substr(0, 200));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kNetwork, std::string("malformed JSON response: ") + e.what());
    }
  }
  throw Error(ErrorCode::kNetwork, "request to " + opt.base_url + suffix + " failed after " +
                                       std::to_string(opt.max_retries + 1) + " attempts (" + last_error + ")");
}

}  // namespace

HttpChatClient::HttpChatClient(HttpOptions options) : opt_(std::move(options)) {
  split_url(opt_.base_url);
  if (opt_.max_retries < 0) throw Error(ErrorCode::kConfig, "max_retries must be >= 0");
}

std::string HttpChatClient::complete(const std::vector<ChatMessage>& messages) {
  nlohmann::json body;
  body["model"] = opt_.model;
  body["temperature"] = opt_.temperature;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : messages) body["messages"].push_back({{"role", role_name(m.role)}, {"content", m.content}});
  const auto j = post_json(opt_, "/chat/completions", body);
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kNetwork, std::string("unexpected chat response shape: ") + e.what());
  }
}

RemoteEmbedder::RemoteEmbedder(HttpOptions options, int dim) : opt_(std::move(options)), dim_(dim) {
  split_url(opt_.base_url);
}

std::vector<float> RemoteEmbedder::embed(std::string_view text) {
  nlohmann::json body;
  body["model"] = opt_.model;
  body["input"] = std::string(text);
  const auto j = post_json(opt_, "/embeddings", body);
  std::vector<float> v;
  try {
    for (const auto& x : j.at("data").at(0).at("embedding")) v.push_back(x.get<float>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kNetwork, std::string("unexpected embedding response shape: ") + e.what());
  }
  if (static_cast<int>(v.size()) != dim_) {
    throw Error(ErrorCode::kNetwork, "embedding has dimension " + std::to_string(v.size()) + ", expected " +
                                         std::to_string(dim_));
  }
  double norm = 0.0;
  for (float x : v) norm += static_cast<double>(x) * x;
  if (norm > 0.0) {
    const double inv = 1.0 / std::sqrt(norm);
    for (float& x : v) x = static_cast<float>(x * inv);
  }
  return v;
}

}  // namespace alphaforge
