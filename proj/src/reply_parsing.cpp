#include "taskalign/reply_parsing.hpp"

namespace taskalign {

namespace {

std::optional<std::string_view> fenced_block(std::string_view reply) {
  auto open = reply.find("```");
  if (open == std::string_view::npos) return std::nullopt;
  auto body = reply.find('\n', open);
  if (body == std::string_view::npos) return std::nullopt;
  auto close = reply.find("```", body + 1);
  if (close == std::string_view::npos) return std::nullopt;
  return reply.substr(body + 1, close - body - 1);
}

std::optional<nlohmann::json> try_parse(std::string_view text) {
  auto doc = nlohmann::json::parse(text.begin(), text.end(), nullptr, false);
  if (doc.is_discarded()) return std::nullopt;
  return doc;
}

}  // namespace

std::optional<nlohmann::json> parse_json_reply(std::string_view reply) {
  if (auto block = fenced_block(reply))
    if (auto doc = try_parse(*block)) return doc;
  if (auto doc = try_parse(reply)) return doc;
  auto first = reply.find_first_of("{[");
  if (first == std::string_view::npos) return std::nullopt;
  char closer = reply[first] == '{' ? '}' : ']';
  auto last = reply.find_last_of(closer);
  if (last == std::string_view::npos || last < first) return std::nullopt;
  return try_parse(reply.substr(first, last - first + 1));
}

std::string strip_code_fence(std::string_view reply) {
  if (auto block = fenced_block(reply)) return std::string(*block);
  return std::string(reply);
}

}  // namespace taskalign
