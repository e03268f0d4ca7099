#include "taskalign/gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

namespace taskalign {

std::string_view to_string(ModelRole role) {
  switch (role) {
    case ModelRole::Conversational: return "CONVERSATIONAL";
    case ModelRole::Extractor: return "EXTRACTOR";
    case ModelRole::Student: return "STUDENT";
  }
  return "CONVERSATIONAL";
}

ModelRole parse_model_role(std::string_view s) {
  if (s == "CONVERSATIONAL") return ModelRole::Conversational;
  if (s == "EXTRACTOR") return ModelRole::Extractor;
  if (s == "STUDENT") return ModelRole::Student;
  fail(ErrorCode::ConfigError, "unknown model role '" + std::string(s) + "'");
}

void validate_endpoint(const ModelEndpoint& e) {
  static const std::regex url(R"(^(https?://[A-Za-z0-9.\-]+(:[0-9]{1,5})?(/.*)?|mock://.*)$)");
  if (!std::regex_match(e.base_url, url))
    fail(ErrorCode::ConfigError, "endpoint base_url '" + e.base_url + "' is not a valid URL");
  if (!(e.timeout_seconds > 0))
    fail(ErrorCode::ConfigError, "endpoint timeout must be positive");
  if (e.model_name.empty()) fail(ErrorCode::ConfigError, "endpoint model_name is empty");
}

json to_json(const ChatMessage& m) { return {{"role", m.role}, {"content", m.content}}; }

ChatMessage chat_message_from_json(const json& doc) {
  return {doc.at("role").get<std::string>(), doc.at("content").get<std::string>()};
}

std::int64_t count_whitespace_tokens(std::string_view text) {
  std::int64_t count = 0;
  bool in_token = false;
  for (char c : text) {
    bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

// ---------------------------------------------------------------------------
// Audit log

AuditLog::AuditLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void AuditLog::record(const ModelEndpoint& endpoint, const ChatRequest& request,
                      const ChatExchange* exchange, const Error* error) {
  json line{{"time", std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count()},
            {"role", to_string(endpoint.role)},
            {"model", endpoint.model_name},
            {"purpose", request.purpose}};
  json msgs = json::array();
  for (const auto& m : request.messages) msgs.push_back(to_json(m));
  line["messages"] = std::move(msgs);
  if (exchange) {
    line["response"] = exchange->response;
    line["usage"] = {{"prompt_tokens", exchange->usage.prompt_tokens},
                     {"completion_tokens", exchange->usage.completion_tokens},
                     {"approximate", exchange->usage.approximate}};
    line["latency_ms"] = exchange->latency_ms;
    line["attempts"] = exchange->attempts;
  }
  if (error) line["error"] = {{"code", error_code_name(error->code())}, {"message", error->detail()}};
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app);
  out << line.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Config

GatewayConfig gateway_config_from_json(const json& doc) {
  GatewayConfig cfg;
  if (!doc.is_object() || !doc.contains("endpoints") || !doc["endpoints"].is_array())
    fail(ErrorCode::ConfigError, "config must be an object with an 'endpoints' array");
  for (const auto& j : doc["endpoints"]) {
    ModelEndpoint e;
    try {
      e.role = parse_model_role(j.at("role").get<std::string>());
      e.base_url = j.at("base_url").get<std::string>();
      e.model_name = j.at("model_name").get<std::string>();
      e.api_key_ref = j.value("api_key_ref", "");
      e.timeout_seconds = j.value("timeout", 60.0);
    } catch (const json::exception& ex) {
      fail(ErrorCode::ConfigError, std::string("bad endpoint entry: ") + ex.what());
    }
    validate_endpoint(e);
    for (const auto& other : cfg.endpoints)
      if (other.role == e.role)
        fail(ErrorCode::ConfigError, "role " + std::string(to_string(e.role)) + " configured twice");
    cfg.endpoints.push_back(std::move(e));
  }
  if (auto it = doc.find("audit_log"); it != doc.end() && it->is_string())
    cfg.audit_log = it->get<std::string>();
  return cfg;
}

GatewayConfig load_gateway_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigError, "cannot read config file " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) fail(ErrorCode::ConfigError, "config file " + path.string() + " is not valid JSON");
  auto cfg = gateway_config_from_json(doc);
  if (cfg.audit_log && cfg.audit_log->is_relative())
    cfg.audit_log = path.parent_path() / *cfg.audit_log;
  return cfg;
}

void check_credentials(const GatewayConfig& config) {
  for (const auto& e : config.endpoints) {
    if (e.api_key_ref.empty()) continue;
    const char* value = std::getenv(e.api_key_ref.c_str());
    if (!value || !*value)
      fail(ErrorCode::ConfigError, "environment variable " + e.api_key_ref + " (key for " +
                                       std::string(to_string(e.role)) + " endpoint) is not set");
  }
}

std::vector<ModelEndpoint> mock_endpoints() {
  std::vector<ModelEndpoint> out;
  for (auto role : {ModelRole::Conversational, ModelRole::Extractor, ModelRole::Student})
    out.push_back({"mock://local", "mock-" + std::string(to_string(role)), "", role, 5.0});
  return out;
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, std::vector<ModelEndpoint> endpoints,
                 RetryPolicy retry, std::shared_ptr<AuditLog> audit)
    : backend_(std::move(backend)),
      endpoints_(std::move(endpoints)),
      retry_(std::move(retry)),
      audit_(std::move(audit)) {
  for (const auto& e : endpoints_) validate_endpoint(e);
  if (!retry_.sleep) retry_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

bool Gateway::has(ModelRole role) const {
  for (const auto& e : endpoints_)
    if (e.role == role) return true;
  return false;
}

const ModelEndpoint& Gateway::endpoint(ModelRole role) const {
  for (const auto& e : endpoints_)
    if (e.role == role) return e;
  fail(ErrorCode::ConfigError, "no endpoint configured for role " + std::string(to_string(role)));
}

ChatExchange Gateway::complete(const ChatRequest& request) {
  return complete(endpoint(request.role), request);
}

ChatExchange Gateway::complete(const ModelEndpoint& endpoint, const ChatRequest& request) {
  auto transient = [](ErrorCode c) {
    return c == ErrorCode::Timeout || c == ErrorCode::RateLimited || c == ErrorCode::GatewayError;
  };
  for (int attempt = 0;; ++attempt) {
    try {
      ChatExchange ex = backend_->send(endpoint, request);
      ex.attempts = attempt + 1;
      if (ex.finish_reason == "length")
        fail(ErrorCode::MalformedResponse, "reply was truncated at the token limit");
      if (audit_) audit_->record(endpoint, request, &ex, nullptr);
      return ex;
    } catch (const Error& err) {
      if (audit_) audit_->record(endpoint, request, nullptr, &err);
      if (!transient(err.code()) || attempt >= retry_.max_retries) throw;
      retry_.sleep(retry_.base_delay * (1 << attempt));
    }
  }
}

// ---------------------------------------------------------------------------
// Mock backend

MockReply MockReply::text(std::string content) {
  MockReply r;
  r.content = std::move(content);
  return r;
}

MockReply MockReply::text(std::string content, std::int64_t prompt_tokens,
                          std::int64_t completion_tokens) {
  MockReply r;
  r.content = std::move(content);
  r.usage = TokenUsage{prompt_tokens, completion_tokens, false};
  return r;
}

MockReply MockReply::error(ErrorCode code) {
  MockReply r;
  r.failure = code;
  return r;
}

void MockChatBackend::script(const std::string& key, std::vector<MockReply> replies,
                             bool repeat_last) {
  std::lock_guard lock(mutex_);
  auto& s = scripts_[key];
  for (auto& r : replies) s.replies.push_back(std::move(r));
  s.repeat_last = repeat_last;
}

void MockChatBackend::set_responder(Responder responder) {
  std::lock_guard lock(mutex_);
  responder_ = std::move(responder);
}

std::vector<ChatRequest> MockChatBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::size_t MockChatBackend::call_count(const std::string& purpose) const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& c : calls_) n += c.purpose == purpose;
  return n;
}

std::optional<MockReply> MockChatBackend::next_scripted(const std::string& key) {
  auto it = scripts_.find(key);
  if (it == scripts_.end() || it->second.replies.empty()) return std::nullopt;
  auto& s = it->second;
  MockReply r = s.replies.front();
  if (s.replies.size() > 1 || !s.repeat_last) s.replies.pop_front();
  return r;
}

ChatExchange MockChatBackend::send(const ModelEndpoint&, const ChatRequest& request) {
  std::optional<MockReply> reply;
  Responder responder;
  {
    std::lock_guard lock(mutex_);
    calls_.push_back(request);
    reply = next_scripted(request.purpose);
    if (!reply) reply = next_scripted(std::string(to_string(request.role)));
    responder = responder_;
  }
  if (!reply) {
    if (!responder)
      fail(ErrorCode::GatewayError, "mock has no reply scripted for '" + request.purpose + "'");
    reply = responder(request);
  }
  if (reply->failure) fail(*reply->failure, "scripted failure for '" + request.purpose + "'");

  ChatExchange ex;
  ex.messages = request.messages;
  ex.response = reply->content;
  ex.finish_reason = reply->finish_reason;
  ex.latency_ms = reply->latency_ms;
  if (reply->usage) {
    ex.usage = *reply->usage;
  } else {
    std::int64_t prompt = 0;
    for (const auto& m : request.messages) prompt += count_whitespace_tokens(m.content);
    ex.usage = {prompt, count_whitespace_tokens(reply->content), true};
  }
  return ex;
}

}  // namespace taskalign
