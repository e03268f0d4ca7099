#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "taskalign/gateway.hpp"

namespace taskalign {

using TemplateVars = std::map<std::string, std::string>;

/// Replaces every {{name}} with vars.at(name). Unknown names raise ConfigError.
std::string render_text(std::string_view text, const TemplateVars& vars);

/// Prompt templates stored as <name>.txt files. A file holds one or more
/// sections introduced by a line "### system" / "### user" / "### assistant".
class TemplateStore {
 public:
  explicit TemplateStore(std::filesystem::path directory);

  /// $TASKALIGN_TEMPLATES if set, else the directory installed with the build.
  static TemplateStore from_default_location();

  std::vector<ChatMessage> render(std::string_view name, const TemplateVars& vars) const;
  bool has(std::string_view name) const;
  const std::filesystem::path& directory() const { return directory_; }

 private:
  struct Section {
    std::string role;
    std::string text;
  };
  std::filesystem::path directory_;
  std::map<std::string, std::vector<Section>, std::less<>> templates_;
};

}  // namespace taskalign
