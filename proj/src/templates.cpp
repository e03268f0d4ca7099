#include "taskalign/templates.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#ifndef TASKALIGN_TEMPLATE_DIR
#define TASKALIGN_TEMPLATE_DIR "templates"
#endif

namespace taskalign {

std::string render_text(std::string_view text, const TemplateVars& vars) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    auto close = text.find("}}", open + 2);
    if (close == std::string_view::npos)
      fail(ErrorCode::ConfigError, "unterminated placeholder in template");
    out.append(text.substr(pos, open - pos));
    std::string name(text.substr(open + 2, close - open - 2));
    auto it = vars.find(name);
    if (it == vars.end()) fail(ErrorCode::ConfigError, "template placeholder '" + name + "' has no value");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

TemplateStore::TemplateStore(std::filesystem::path directory) : directory_(std::move(directory)) {
  if (!std::filesystem::is_directory(directory_))
    fail(ErrorCode::ConfigError, "template directory " + directory_.string() + " does not exist");
  for (const auto& entry : std::filesystem::directory_iterator(directory_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path());
    std::vector<Section> sections;
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("### ", 0) == 0) {
        sections.push_back({line.substr(4), {}});
        continue;
      }
      if (sections.empty()) continue;  // preamble / comments
      sections.back().text += line;
      sections.back().text += '\n';
    }
    for (auto& s : sections) {
      while (!s.text.empty() && (s.text.back() == '\n' || s.text.back() == ' ')) s.text.pop_back();
      if (s.role != "system" && s.role != "user" && s.role != "assistant")
        fail(ErrorCode::ConfigError, "template " + entry.path().string() + " has unknown section '" + s.role + "'");
    }
    templates_[entry.path().stem().string()] = std::move(sections);
  }
}

TemplateStore TemplateStore::from_default_location() {
  if (const char* env = std::getenv("TASKALIGN_TEMPLATES"); env && *env) return TemplateStore(env);
  return TemplateStore(TASKALIGN_TEMPLATE_DIR);
}

bool TemplateStore::has(std::string_view name) const { return templates_.find(name) != templates_.end(); }

std::vector<ChatMessage> TemplateStore::render(std::string_view name, const TemplateVars& vars) const {
  auto it = templates_.find(name);
  if (it == templates_.end())
    fail(ErrorCode::ConfigError, "no template named '" + std::string(name) + "' in " + directory_.string());
  std::vector<ChatMessage> out;
  for (const auto& s : it->second) out.push_back({s.role, render_text(s.text, vars)});
  return out;
}

}  // namespace taskalign
