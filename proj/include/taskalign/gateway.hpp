#pragma once

// Chat-completion client shared by every model role, with retry, audit logging
// and a scriptable in-process mock.

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taskalign/errors.hpp"

namespace taskalign {

using json = nlohmann::json;

enum class ModelRole { Conversational, Extractor, Student };

std::string_view to_string(ModelRole role);
ModelRole parse_model_role(std::string_view s);

struct ModelEndpoint {
  std::string base_url;
  std::string model_name;
  std::string api_key_ref;  // name of the environment variable holding the key
  ModelRole role = ModelRole::Conversational;
  double timeout_seconds = 60.0;
};

/// Throws ConfigError unless base_url is http(s)://host[:port][/path] and the
/// timeout is positive. The "mock://" scheme is accepted for offline use.
void validate_endpoint(const ModelEndpoint& endpoint);

struct ChatMessage {
  std::string role;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

json to_json(const ChatMessage& m);
ChatMessage chat_message_from_json(const json& doc);

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  bool approximate = false;
  bool operator==(const TokenUsage&) const = default;
};

struct ChatRequest {
  ModelRole role = ModelRole::Conversational;
  std::string purpose;  // e.g. "extract_triple"; for logs and mock routing
  std::vector<ChatMessage> messages;
  json context = json::object();  // structured inputs; never sent on the wire
};

struct ChatExchange {
  std::vector<ChatMessage> messages;
  std::string response;
  std::string finish_reason = "stop";
  TokenUsage usage;
  double latency_ms = 0.0;
  int attempts = 1;

  bool operator==(const ChatExchange&) const = default;
};

/// Whitespace-delimited token count; the fallback when a backend omits usage.
std::int64_t count_whitespace_tokens(std::string_view text);

/// One attempt against one endpoint. Implementations throw Error with a
/// gateway error code on failure.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatExchange send(const ModelEndpoint& endpoint, const ChatRequest& request) = 0;
};

struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds base_delay{250};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to sleep_for
};

/// Line-delimited JSON log of every request/response pair.
class AuditLog {
 public:
  explicit AuditLog(std::filesystem::path path);
  void record(const ModelEndpoint& endpoint, const ChatRequest& request,
              const ChatExchange* exchange, const Error* error);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

struct GatewayConfig {
  std::vector<ModelEndpoint> endpoints;
  std::optional<std::filesystem::path> audit_log;
};

GatewayConfig gateway_config_from_json(const json& doc);
GatewayConfig load_gateway_config(const std::filesystem::path& path);
/// Throws ConfigError naming the first endpoint key variable that is unset.
void check_credentials(const GatewayConfig& config);
/// One mock:// endpoint per role.
std::vector<ModelEndpoint> mock_endpoints();

class Gateway {
 public:
  Gateway(std::shared_ptr<ChatBackend> backend, std::vector<ModelEndpoint> endpoints,
          RetryPolicy retry = {}, std::shared_ptr<AuditLog> audit = nullptr);

  /// Sends with up to `max_retries` retries on Timeout, RateLimited and
  /// transient GatewayError, backing off exponentially. Truncated replies
  /// raise MalformedResponse.
  ChatExchange complete(const ModelEndpoint& endpoint, const ChatRequest& request);
  /// Routes to the endpoint configured for request.role.
  ChatExchange complete(const ChatRequest& request);

  bool has(ModelRole role) const;
  const ModelEndpoint& endpoint(ModelRole role) const;

 private:
  std::shared_ptr<ChatBackend> backend_;
  std::vector<ModelEndpoint> endpoints_;
  RetryPolicy retry_;
  std::shared_ptr<AuditLog> audit_;
};

/// OpenAI-style chat-completions over HTTP(S).
class HttpChatBackend : public ChatBackend {
 public:
  ChatExchange send(const ModelEndpoint& endpoint, const ChatRequest& request) override;
};

struct MockReply {
  std::string content;
  std::optional<TokenUsage> usage;
  std::optional<ErrorCode> failure;
  std::string finish_reason = "stop";
  double latency_ms = 0.0;

  static MockReply text(std::string content);
  static MockReply text(std::string content, std::int64_t prompt_tokens,
                        std::int64_t completion_tokens);
  static MockReply error(ErrorCode code);
};

/// Deterministic backend. Replies are taken from the script registered under
/// the request's purpose, else under its role name, else from the responder.
class MockChatBackend : public ChatBackend {
 public:
  using Responder = std::function<MockReply(const ChatRequest&)>;

  void script(const std::string& key, std::vector<MockReply> replies, bool repeat_last = false);
  void set_responder(Responder responder);
  std::vector<ChatRequest> calls() const;
  std::size_t call_count(const std::string& purpose) const;

  ChatExchange send(const ModelEndpoint& endpoint, const ChatRequest& request) override;

 private:
  struct Script {
    std::deque<MockReply> replies;
    bool repeat_last = false;
  };
  std::optional<MockReply> next_scripted(const std::string& key);

  mutable std::mutex mutex_;
  std::map<std::string, Script> scripts_;
  Responder responder_;
  std::vector<ChatRequest> calls_;
};

}  // namespace taskalign
