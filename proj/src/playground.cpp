#include "taskalign/playground.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include "taskalign/errors.hpp"
#include "taskalign/reply_parsing.hpp"

namespace taskalign {

namespace {

std::string tree_text(const IntentTree& tree) { return to_json(tree).dump(2); }

IntentTree parse_tree_reply(const std::string& reply) {
  auto doc = parse_json_reply(reply);
  if (!doc || !doc->is_object()) fail(ErrorCode::MalformedDocument, "reply holds no JSON tree");
  if (doc->contains("intent_tree")) doc = (*doc)["intent_tree"];
  if (!doc->contains("version")) (*doc)["version"] = 0;
  IntentTree tree = intent_tree_from_json(*doc);
  validate_intent_tree(tree);
  return tree;
}

bool same_shape(const IntentTree& a, const IntentTree& b) {
  if (a.root != b.root || a.nodes.size() != b.nodes.size()) return false;
  for (const auto& [id, n] : a.nodes) {
    auto it = b.nodes.find(id);
    if (it == b.nodes.end() || it->second.children != n.children) return false;
  }
  return true;
}

bool all_completed(const IntentTree& tree) {
  for (const auto& [id, n] : tree.nodes)
    if (n.state != IntentState::Completed) return false;
  return true;
}

ChatRequest agent_request(ModelRole role, std::string purpose, json context, std::vector<ChatMessage> messages) {
  ChatRequest r;
  r.role = role;
  r.purpose = std::move(purpose);
  r.context = std::move(context);
  r.messages = std::move(messages);
  return r;
}

}  // namespace

std::string_view to_string(PlaygroundStatus s) {
  switch (s) {
    case PlaygroundStatus::Running: return "RUNNING";
    case PlaygroundStatus::Completed: return "COMPLETED";
    case PlaygroundStatus::Stalled: return "STALLED";
  }
  return "RUNNING";
}

PlaygroundStatus parse_playground_status(std::string_view s) {
  if (s == "RUNNING") return PlaygroundStatus::Running;
  if (s == "COMPLETED") return PlaygroundStatus::Completed;
  if (s == "STALLED") return PlaygroundStatus::Stalled;
  fail(ErrorCode::MalformedDocument, "unknown playground status '" + std::string(s) + "'");
}

json to_json(const ExecutionReport& r) {
  json verdicts = json::object();
  for (const auto& [id, st] : r.verdicts) verdicts[id] = to_string(st);
  return {{"predicted_outcomes", r.predicted_outcomes},
          {"file_changes", r.file_changes},
          {"errors", r.errors},
          {"verdicts", std::move(verdicts)}};
}

ExecutionReport execution_report_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::MalformedDocument, "execution report must be an object");
  ExecutionReport r;
  try {
    r.predicted_outcomes = doc.value("predicted_outcomes", "");
    r.file_changes = doc.value("file_changes", std::vector<std::string>{});
    r.errors = doc.value("errors", std::vector<std::string>{});
    if (auto it = doc.find("verdicts"); it != doc.end()) {
      if (!it->is_object()) fail(ErrorCode::MalformedDocument, "verdicts must be an object");
      for (const auto& [id, st] : it->items()) r.verdicts[id] = parse_intent_state(st.get<std::string>());
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::MalformedDocument, std::string("bad execution report: ") + ex.what());
  }
  return r;
}

json to_json(const PlaygroundSession& s) {
  json rounds = json::array();
  for (const auto& r : s.transcript)
    rounds.push_back({{"round", r.round},
                      {"target", r.target},
                      {"prompt", r.prompt},
                      {"code", r.code},
                      {"execution_report", to_json(r.report)},
                      {"state_updates", r.state_updates}});
  return {{"description", s.description},
          {"tree", to_json(s.tree)},
          {"transcript", std::move(rounds)},
          {"stagnation_counter", s.stagnation_counter},
          {"status", to_string(s.status)}};
}

PlaygroundSession playground_session_from_json(const json& doc) {
  PlaygroundSession s;
  try {
    s.description = doc.at("description").get<std::string>();
    s.tree = intent_tree_from_json(doc.at("tree"));
    s.stagnation_counter = doc.at("stagnation_counter").get<int>();
    s.status = parse_playground_status(doc.at("status").get<std::string>());
    for (const auto& j : doc.at("transcript")) {
      PlaygroundRound r;
      r.round = j.at("round").get<int>();
      r.target = j.at("target").get<std::string>();
      r.prompt = j.at("prompt").get<std::string>();
      r.code = j.at("code").get<std::string>();
      r.report = execution_report_from_json(j.at("execution_report"));
      r.state_updates = j.at("state_updates").get<std::vector<NodeId>>();
      s.transcript.push_back(std::move(r));
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::MalformedDocument, std::string("bad playground transcript: ") + ex.what());
  }
  return s;
}

IntentTree construct_intent_tree(const std::string& description, Gateway& gateway, const TemplateStore& templates) {
  if (description.find_first_not_of(" \t\r\n") == std::string::npos)
    fail(ErrorCode::PreconditionFailed, "seed description is empty");
  auto request = agent_request(ModelRole::Conversational, "intent_tree", {{"description", description}},
                               templates.render("intent_tree", {{"description", description}}));
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto ex = gateway.complete(request);
    try {
      IntentTree tree = parse_tree_reply(ex.response);
      if (tree.leaves().size() < 2) fail(ErrorCode::DegenerateTree, "tree has fewer than two leaves");
      for (auto& [id, n] : tree.nodes) n.state = IntentState::NotCompleted;
      tree.version = 0;
      return tree;
    } catch (const Error& err) {
      last_error = err.what();
    }
    request.messages.push_back({"assistant", ex.response});
    auto repair = templates.render("repair", {{"error", last_error}});
    request.messages.insert(request.messages.end(), repair.begin(), repair.end());
    request.context["repair_error"] = last_error;
  }
  fail(ErrorCode::DegenerateTree, last_error);
}

std::vector<IntentTree> construct_intent_variants(const IntentTree& base, std::size_t count, Gateway& gateway,
                                                  const TemplateStore& templates) {
  std::vector<IntentTree> out;
  for (std::size_t i = 1; i <= count; ++i) {
    auto request = agent_request(ModelRole::Conversational, "intent_variant",
                                 {{"tree", to_json(base)}, {"index", i}},
                                 templates.render("intent_variant", {{"tree", tree_text(base)}, {"index", std::to_string(i)}}));
    auto ex = gateway.complete(request);
    IntentTree v = parse_tree_reply(ex.response);
    if (!same_shape(base, v)) fail(ErrorCode::DegenerateTree, "variant " + std::to_string(i) + " changes the tree structure");
    for (auto& [id, n] : v.nodes) n.state = base.node(id).state;
    v.version = base.version;
    out.push_back(std::move(v));
  }
  return out;
}

std::optional<NodeId> first_open_leaf(const IntentTree& tree) {
  for (const auto& id : tree.preorder()) {
    const auto& n = tree.node(id);
    if (n.children.empty() && n.state == IntentState::NotCompleted) return id;
  }
  return std::nullopt;
}

std::string prompt_style(int round) {
  if (round <= 1) return "Use everyday words only; avoid any technical term.";
  if (round == 2) return "You may mention file types or websites you care about.";
  if (round == 3) return "Mention concrete formats, folders or fields you expect.";
  return "Be specific about inputs, outputs and edge cases, using the technical terms you have picked up.";
}

std::string simulate_user_prompt(const PlaygroundSession& session, Gateway& gateway, const TemplateStore& templates,
                                 const std::string& domain) {
  if (session.status != PlaygroundStatus::Running) fail(ErrorCode::PreconditionFailed, "session is not running");
  auto target = first_open_leaf(session.tree);
  if (!target) fail(ErrorCode::PreconditionFailed, "no NOT_COMPLETED leaf left");
  int round = static_cast<int>(session.transcript.size()) + 1;
  const auto& text = session.tree.node(*target).text;
  auto request = agent_request(
      ModelRole::Conversational, "user_sim",
      {{"description", session.description}, {"target", *target}, {"target_text", text}, {"round", round}},
      templates.render("user_sim", {{"domain", domain},
                                    {"description", session.description},
                                    {"round", std::to_string(round)},
                                    {"style", prompt_style(round)},
                                    {"target", text}}));
  return gateway.complete(request).response;
}

ExecutionReport analyze_execution(const std::string& code, const IntentTree& tree, Gateway& gateway,
                                  const TemplateStore& templates) {
  if (code.find_first_not_of(" \t\r\n") == std::string::npos) fail(ErrorCode::PreconditionFailed, "code is empty");
  auto request = agent_request(ModelRole::Conversational, "analyzer", {{"code", code}, {"tree", to_json(tree)}},
                               templates.render("analyzer", {{"code", code}, {"tree", tree_text(tree)}}));
  auto ex = gateway.complete(request);
  auto doc = parse_json_reply(ex.response);
  if (!doc) fail(ErrorCode::MalformedResponse, "analyzer reply holds no JSON report");
  ExecutionReport report = execution_report_from_json(*doc);
  for (const auto& [id, st] : report.verdicts)
    if (!tree.contains(id)) fail(ErrorCode::InvalidVerdict, "verdict for unknown intent '" + id + "'");
  return report;
}

std::vector<NodeId> apply_verdicts(IntentTree& tree, const ExecutionReport& report) {
  std::set<NodeId> flipped;
  for (const auto& [id, st] : report.verdicts) {
    if (!tree.contains(id)) fail(ErrorCode::InvalidVerdict, "verdict for unknown intent '" + id + "'");
    auto& n = tree.node(id);
    if (st == IntentState::Completed && n.state == IntentState::NotCompleted) {
      n.state = IntentState::Completed;
      flipped.insert(id);
    }
  }
  // Reverse preorder visits children before parents.
  auto order = tree.preorder();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& n = tree.node(*it);
    if (n.children.empty() || n.state == IntentState::Completed) continue;
    bool done = std::all_of(n.children.begin(), n.children.end(),
                            [&](const NodeId& c) { return tree.node(c).state == IntentState::Completed; });
    if (done) {
      n.state = IntentState::Completed;
      flipped.insert(*it);
    }
  }
  std::vector<NodeId> out;
  for (const auto& id : order)
    if (flipped.count(id)) out.push_back(id);
  return out;
}

PlaygroundRun run_session(const std::string& description, Gateway& gateway, const TemplateStore& templates,
                          const PlaygroundOptions& options) {
  return run_session_with_tree(description, construct_intent_tree(description, gateway, templates), gateway,
                               templates, options);
}

PlaygroundRun run_session_with_tree(const std::string& description, IntentTree tree, Gateway& gateway,
                                    const TemplateStore& templates, const PlaygroundOptions& options) {
  if (options.max_rounds < 1) fail(ErrorCode::PreconditionFailed, "max_rounds must be at least 1");
  PlaygroundRun run;
  auto& s = run.session;
  s.description = description;
  s.tree = std::move(tree);
  if (all_completed(s.tree)) s.status = PlaygroundStatus::Completed;

  Extractor extractor(gateway, templates);
  std::optional<Triple> prev;
  std::vector<ChatMessage> history;
  auto checkpoint = [&] {
    if (options.checkpoint) options.checkpoint(s);
  };

  try {
    while (s.status == PlaygroundStatus::Running && static_cast<int>(s.transcript.size()) < options.max_rounds) {
      PlaygroundRound r;
      r.round = static_cast<int>(s.transcript.size()) + 1;
      r.target = *first_open_leaf(s.tree);
      r.prompt = simulate_user_prompt(s, gateway, templates, options.domain);

      auto messages = templates.render("codegen", {{"description", description}, {"prompt", r.prompt}});
      messages.insert(messages.begin() + 1, history.begin(), history.end());
      auto code = gateway.complete(agent_request(
          ModelRole::Conversational, "codegen",
          {{"description", description}, {"prompt", r.prompt}, {"target", r.target}, {"round", r.round}},
          std::move(messages)));
      r.code = code.response;
      history.push_back({"user", r.prompt});
      history.push_back({"assistant", r.code});

      auto record = extractor.extract_teacher_from_code(r.prompt, code, prev);
      run.dataset_lines.push_back(emit_distillation_pair(record));
      prev = record.triple;

      r.report = analyze_execution(r.code, s.tree, gateway, templates);
      r.state_updates = apply_verdicts(s.tree, r.report);
      s.stagnation_counter = r.state_updates.empty() ? s.stagnation_counter + 1 : 0;
      s.transcript.push_back(std::move(r));

      if (all_completed(s.tree))
        s.status = PlaygroundStatus::Completed;
      else if (s.stagnation_counter >= kStagnationLimit)
        s.status = PlaygroundStatus::Stalled;
      checkpoint();
    }
  } catch (...) {
    checkpoint();
    throw;
  }
  return run;
}

std::vector<ManyOutcome> run_many(std::size_t count, std::size_t workers,
                                  const std::function<PlaygroundRun(std::size_t)>& job) {
  std::vector<ManyOutcome> out(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i].run = job(i);
      } catch (const std::exception& ex) {
        out[i].error = ex.what();
      }
    }
  };
  std::vector<std::thread> pool;
  std::size_t n = std::max<std::size_t>(1, std::min(workers, count));
  for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

void write_transcript(const std::filesystem::path& path, const PlaygroundSession& session) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) fail(ErrorCode::IoError, "cannot write " + tmp.string());
    f << to_json(session).dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace taskalign
