#include "taskalign/mock_responder.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "taskalign/triple.hpp"

namespace taskalign {

namespace {

std::string trim(std::string s) {
  auto first = s.find_first_not_of(" \t\r\n.");
  if (first == std::string::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n.");
  return s.substr(first, last - first + 1);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string clip_words(const std::string& text, std::size_t n = 12) {
  std::istringstream in(text);
  std::string word, out;
  for (std::size_t i = 0; i < n && in >> word; ++i) out += (out.empty() ? "" : " ") + word;
  return out.empty() ? "task" : out;
}

std::vector<std::string> clauses(const std::string& text) {
  std::string s = text;
  for (const char* sep : {", and ", " and ", ", ", "; ", " then "}) {
    std::string needle = sep;
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1))
      s.replace(pos, needle.size(), "\n");
  }
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);)
    if (auto t = trim(line); !t.empty()) out.push_back(clip_words(t));
  return out;
}

std::string fenced(const std::string& lang, const std::string& body) { return "```" + lang + "\n" + body + "```\n"; }

std::string fresh(const std::set<std::string>& used, const std::string& base) {
  if (!used.count(base)) return base;
  for (int k = 2;; ++k)
    if (auto id = base + "_" + std::to_string(k); !used.count(id)) return id;
}

std::set<std::string> task_ids(const json& triple) {
  std::set<std::string> ids;
  for (const auto& n : triple["graph"]["nodes"]) ids.insert(n["id"].get<std::string>());
  return ids;
}

std::string owner_of(const json& triple, const std::string& task) {
  for (const auto& e : triple["mapping"]["entries"])
    for (const auto& t : e["task_node_ids"])
      if (t == task) return e["intent_id"].get<std::string>();
  return triple["intent_tree"]["root"].get<std::string>();
}

void claim(json& triple, const std::string& intent, const std::string& task) {
  for (auto& e : triple["mapping"]["entries"])
    if (e["intent_id"] == intent) {
      e["task_node_ids"].push_back(task);
      return;
    }
  triple["mapping"]["entries"].push_back({{"intent_id", intent}, {"task_node_ids", {task}}});
}

json first_triple(const std::string& prompt) {
  auto parts = clauses(prompt);
  json nodes = json::array(), tasks = json::array(), edges = json::array(), entries = json::array();
  json root_children = json::array();
  if (parts.size() == 1) parts = {"set up " + parts[0], parts[0]};
  for (std::size_t j = 0; j < parts.size(); ++j) {
    std::string intent = "i" + std::to_string(j + 1), task = "t1_" + std::to_string(j + 1);
    root_children.push_back(intent);
    nodes.push_back({{"id", intent}, {"text", parts[j]}, {"state", "NOT_COMPLETED"}, {"children", json::array()}});
    tasks.push_back({{"id", task}, {"label", parts[j]}, {"origin", "EXTRACTED"}});
    entries.push_back({{"intent_id", intent}, {"task_node_ids", {task}}});
    if (j > 0) edges.push_back({{"src", "t1_" + std::to_string(j)}, {"dst", task}, {"kind", "DATA_FLOW"}});
  }
  nodes.insert(nodes.begin(), json{{"id", "i0"}, {"text", clip_words(prompt)}, {"state", "NOT_COMPLETED"},
                                   {"children", root_children}});
  return {{"intent_tree", {{"root", "i0"}, {"version", 1}, {"nodes", nodes}}},
          {"graph", {{"nodes", tasks}, {"edges", edges}}},
          {"mapping", {{"entries", entries}}},
          {"round", 1}};
}

json next_triple(json triple, const std::string& prompt, std::int64_t round) {
  std::set<std::string> claimed, intents;
  for (const auto& e : triple["mapping"]["entries"]) claimed.insert(e["intent_id"].get<std::string>());
  auto& tree = triple["intent_tree"];
  std::string root = tree["root"];
  std::vector<std::pair<std::string, std::string>> open;  // unclaimed intents
  for (const auto& n : tree["nodes"]) {
    std::string id = n["id"];
    intents.insert(id);
    if (id != root && !claimed.count(id) && n["children"].empty()) open.emplace_back(id, n["text"].get<std::string>());
  }
  if (open.empty()) {
    std::string id = fresh(intents, "x" + std::to_string(round));
    tree["nodes"].push_back({{"id", id}, {"text", clip_words(prompt)}, {"state", "NOT_COMPLETED"}, {"children", json::array()}});
    for (auto& n : tree["nodes"])
      if (n["id"] == root) n["children"].push_back(id);
    open.emplace_back(id, clip_words(prompt));
  }
  auto used = task_ids(triple);
  std::string last = triple["graph"]["nodes"].empty() ? "" : triple["graph"]["nodes"].back()["id"].get<std::string>();
  int j = 0;
  for (const auto& [intent, text] : open) {
    std::string task = fresh(used, "t" + std::to_string(round) + "_" + std::to_string(++j));
    used.insert(task);
    triple["graph"]["nodes"].push_back({{"id", task}, {"label", text}, {"origin", "EXTRACTED"}});
    if (!last.empty()) triple["graph"]["edges"].push_back({{"src", last}, {"dst", task}, {"kind", "DEPENDENCY"}});
    claim(triple, intent, task);
  }
  triple["round"] = round;
  tree["version"] = round;
  return triple;
}

json modified_triple(json triple, const std::string& instruction) {
  if (lower(instruction).find("no change") != std::string::npos) return triple;
  auto used = task_ids(triple);
  std::string last = triple["graph"]["nodes"].empty() ? "" : triple["graph"]["nodes"].back()["id"].get<std::string>();
  std::string owner = last.empty() ? triple["intent_tree"]["root"].get<std::string>() : owner_of(triple, last);
  std::string text = clip_words(instruction, 8);
  std::string prev = last;
  for (int k = 1; k <= 2; ++k) {
    std::string id = fresh(used, "m" + std::to_string(triple["round"].get<std::int64_t>()) + "_" + std::to_string(k));
    used.insert(id);
    triple["graph"]["nodes"].push_back(
        {{"id", id}, {"label", text + " (step " + std::to_string(k) + ")"}, {"origin", "NL_MODIFIED"}});
    if (!prev.empty()) triple["graph"]["edges"].push_back({{"src", prev}, {"dst", id}, {"kind", "DATA_FLOW"}});
    claim(triple, owner, id);
    prev = id;
  }
  return triple;
}

std::string code_for(const std::vector<std::string>& steps, const std::string& header) {
  std::string body = "# " + header + "\n";
  for (std::size_t i = 0; i < steps.size(); ++i)
    body += "def step_" + std::to_string(i + 1) + "():\n    # " + steps[i] + "\n    pass\n\n";
  body += "def main():\n";
  for (std::size_t i = 0; i < steps.size(); ++i) body += "    step_" + std::to_string(i + 1) + "()\n";
  return fenced("python", body);
}

json variant_tree(json tree, std::int64_t index) {
  for (auto& n : tree["nodes"]) n["text"] = "(wording " + std::to_string(index) + ") " + n["text"].get<std::string>();
  return tree;
}

json seed_tree(const std::string& description) {
  auto parts = clauses(description);
  if (parts.size() < 2) parts = {"gather what is needed to " + clip_words(description), clip_words(description)};
  json nodes = json::array(), children = json::array();
  for (std::size_t j = 0; j < parts.size(); ++j) {
    std::string id = "s" + std::to_string(j + 1);
    children.push_back(id);
    nodes.push_back({{"id", id}, {"text", parts[j]}, {"children", json::array()}});
  }
  nodes.insert(nodes.begin(), json{{"id", "s0"}, {"text", clip_words(description)}, {"children", children}});
  return {{"root", "s0"}, {"nodes", nodes}};
}

json analyzer_report(const std::string& code) {
  json verdicts = json::object();
  const std::string marker = "# target: ";
  if (auto pos = code.find(marker); pos != std::string::npos) {
    auto end = code.find('\n', pos);
    verdicts[trim(code.substr(pos + marker.size(), end - pos - marker.size()))] = "COMPLETED";
  }
  return {{"predicted_outcomes", "script runs to completion"},
          {"file_changes", json::array({"output/result.txt"})},
          {"errors", json::array()},
          {"verdicts", verdicts}};
}

}  // namespace

MockReply synthetic_reply(const ChatRequest& request) {
  const json& ctx = request.context;
  const std::string& p = request.purpose;
  auto str = [&](const char* key) { return ctx.contains(key) && ctx[key].is_string() ? ctx[key].get<std::string>() : std::string(); };

  if (p == "intent_updates") {
    std::string prompt = str("prompt");
    json ops = json::array();
    if (lower(prompt).find("no change") != std::string::npos)
      ops.push_back({{"op", "NOOP"}});
    else
      ops.push_back({{"op", "ADD"}, {"parent_id", ctx["tree"]["root"]}, {"new_node", {{"text", clip_words(prompt)}}}});
    return MockReply::text(fenced("json", json{{"updates", ops}}.dump(2) + "\n"));
  }
  if (p == "teacher_code") return MockReply::text(code_for(clauses(str("prompt")), str("prompt")));
  if (p == "teacher_extract" || p == "student_extract") {
    std::int64_t round = ctx.value("round", std::int64_t{1});
    json out = ctx["prev_triple"].is_null() ? first_triple(str("prompt")) : next_triple(ctx["prev_triple"], str("prompt"), round);
    return MockReply::text(out.dump(2));
  }
  if (p == "modify_graph") return MockReply::text(modified_triple(ctx["triple"], str("instruction")).dump(2));
  if (p == "confirm_generate") {
    std::vector<std::string> steps;
    for (const auto& n : ctx["triple"]["graph"]["nodes"]) steps.push_back(n["label"].get<std::string>());
    return MockReply::text(code_for(steps, "generated from the confirmed task graph"));
  }
  if (p == "intent_tree") return MockReply::text(seed_tree(str("description")).dump(2));
  if (p == "intent_variant") return MockReply::text(variant_tree(ctx["tree"], ctx.value("index", std::int64_t{1})).dump(2));
  if (p == "user_sim")
    return MockReply::text("Hmm, could you " + lower(str("target_text")) + "? (round " +
                           std::to_string(ctx.value("round", 1)) + ")");
  if (p == "codegen")
    return MockReply::text(fenced("python", "# target: " + str("target") + "\n# " + str("prompt") +
                                                "\ndef solve():\n    pass\n"));
  if (p == "analyzer") return MockReply::text(analyzer_report(str("code")).dump(2));
  return MockReply::error(ErrorCode::GatewayError);
}

std::shared_ptr<MockChatBackend> make_synthetic_backend() {
  auto backend = std::make_shared<MockChatBackend>();
  backend->set_responder(synthetic_reply);
  return backend;
}

Gateway make_mock_gateway(std::shared_ptr<MockChatBackend> backend) {
  RetryPolicy retry;
  retry.sleep = [](std::chrono::milliseconds) {};
  return Gateway(std::move(backend), mock_endpoints(), retry);
}

}  // namespace taskalign
