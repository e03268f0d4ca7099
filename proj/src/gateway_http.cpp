#include <chrono>
#include <cstdlib>
#include <regex>

#include <httplib.h>

#include "taskalign/gateway.hpp"

namespace taskalign {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

ParsedUrl split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) fail(ErrorCode::ConfigError, "unsupported base_url " + url);
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

}  // namespace

ChatExchange HttpChatBackend::send(const ModelEndpoint& endpoint, const ChatRequest& request) {
  auto url = split_url(endpoint.base_url);
  httplib::Client client(url.scheme_host_port);
  auto secs = static_cast<time_t>(endpoint.timeout_seconds);
  auto usecs = static_cast<time_t>((endpoint.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!endpoint.api_key_ref.empty()) {
    const char* key = std::getenv(endpoint.api_key_ref.c_str());
    if (!key || !*key) fail(ErrorCode::AuthFailure, "environment variable " + endpoint.api_key_ref + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  json body{{"model", endpoint.model_name}, {"messages", json::array()}, {"stream", false}};
  for (const auto& m : request.messages) body["messages"].push_back(to_json(m));

  auto started = std::chrono::steady_clock::now();
  auto res = client.Post(url.path_prefix + "/chat/completions", headers, body.dump(), "application/json");
  double latency =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  if (!res) {
    auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write ||
        err == httplib::Error::ConnectionTimeout)
      fail(ErrorCode::Timeout, "request to " + endpoint.base_url + " timed out (" + httplib::to_string(err) + ")");
    fail(ErrorCode::GatewayError, "request to " + endpoint.base_url + " failed: " + httplib::to_string(err));
  }
  if (res->status == 401 || res->status == 403)
    fail(ErrorCode::AuthFailure, "backend rejected credentials (HTTP " + std::to_string(res->status) + ")");
  if (res->status == 429) fail(ErrorCode::RateLimited, "backend is rate limiting (HTTP 429)");
  if (res->status == 408) fail(ErrorCode::Timeout, "backend timed out (HTTP 408)");
  if (res->status >= 500) fail(ErrorCode::GatewayError, "backend error HTTP " + std::to_string(res->status));
  if (res->status != 200)
    fail(ErrorCode::MalformedResponse, "unexpected HTTP " + std::to_string(res->status));

  json reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("choices") || !reply["choices"].is_array() ||
      reply["choices"].empty())
    fail(ErrorCode::MalformedResponse, "reply has no choices");
  const json& choice = reply["choices"][0];
  if (!choice.contains("message") || !choice["message"].contains("content") ||
      !choice["message"]["content"].is_string())
    fail(ErrorCode::MalformedResponse, "reply choice has no message content");

  ChatExchange ex;
  ex.messages = request.messages;
  ex.response = choice["message"]["content"].get<std::string>();
  if (auto fr = choice.find("finish_reason"); fr != choice.end() && fr->is_string())
    ex.finish_reason = fr->get<std::string>();
  ex.latency_ms = latency;
  if (auto u = reply.find("usage"); u != reply.end() && u->is_object() &&
                                    u->contains("completion_tokens")) {
    ex.usage.prompt_tokens = u->value("prompt_tokens", std::int64_t{0});
    ex.usage.completion_tokens = u->value("completion_tokens", std::int64_t{0});
  } else {
    for (const auto& m : request.messages) ex.usage.prompt_tokens += count_whitespace_tokens(m.content);
    ex.usage.completion_tokens = count_whitespace_tokens(ex.response);
    ex.usage.approximate = true;
  }
  return ex;
}

}  // namespace taskalign
