#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace taskalign {

/// Pulls a JSON value out of a model reply: the first fenced ```json block if
/// present, else the span from the first '{' or '[' to the matching last
/// bracket. Returns nullopt when nothing parses.
std::optional<nlohmann::json> parse_json_reply(std::string_view reply);

/// Body of the first fenced code block, or the whole reply when unfenced.
std::string strip_code_fence(std::string_view reply);

}  // namespace taskalign
