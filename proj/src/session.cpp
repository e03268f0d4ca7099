#include "taskalign/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "taskalign/errors.hpp"

namespace taskalign {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

[[noreturn]] void invalid_edit(const std::string& msg) { fail(ErrorCode::InvalidEdit, msg); }

void require_status(const Session& s, std::initializer_list<SessionStatus> allowed, const char* op) {
  for (auto a : allowed)
    if (s.status == a) return;
  fail(ErrorCode::PreconditionFailed,
       std::string(op) + " is not allowed in state " + std::string(to_string(s.status)));
}

Mapping mapping_within(const Mapping& m, const IntentTree& tree) {
  Mapping out;
  for (const auto& e : m.entries)
    if (tree.contains(e.intent_id)) out.entries.push_back(e);
  return out;
}

FocusSet all_intents(const IntentTree& tree) {
  auto order = tree.preorder();
  return {order.begin(), order.end()};
}

void patch_labels(SimplifiedView& view, const UnderstandingGraph& g) {
  for (auto& n : view.nodes) {
    if (n.supernode) continue;
    if (const TaskNode* t = g.find(n.id)) {
      n.label = t->label;
      n.detail = t->detail;
    }
  }
}

json round_to_json(const SessionRound& r) {
  json conditioning = json::array();
  for (const auto& m : r.conditioning) conditioning.push_back(to_json(m));
  return {{"round", r.round},
          {"prompt", r.prompt},
          {"path", to_string(r.path)},
          {"updates", updates_to_json(r.updates)["updates"]},
          {"tracker_fallback", r.tracker_fallback},
          {"code", r.code ? json(*r.code) : json(nullptr)},
          {"conditioning", std::move(conditioning)}};
}

SessionRound round_from_json(const json& j) {
  SessionRound r;
  r.round = j.at("round").get<std::int64_t>();
  r.prompt = j.at("prompt").get<std::string>();
  r.path = j.at("path").get<std::string>() == "TEACHER" ? ExtractionPath::Teacher : ExtractionPath::Student;
  r.updates = updates_from_json(j.at("updates"));
  r.tracker_fallback = j.at("tracker_fallback").get<bool>();
  if (!j.at("code").is_null()) r.code = j.at("code").get<std::string>();
  for (const auto& m : j.at("conditioning")) r.conditioning.push_back(chat_message_from_json(m));
  return r;
}

void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      ::close(fd);
      fail(ErrorCode::IoError, "write failed on " + path.string());
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

void durable_write(const std::filesystem::path& path, const std::string& data, bool append) {
  int flags = O_WRONLY | O_CREAT | (append ? O_APPEND : O_TRUNC);
  int fd = ::open(path.c_str(), flags, 0644);
  if (fd < 0) fail(ErrorCode::IoError, "cannot open " + path.string());
  write_all(fd, data, path);
  if (::fsync(fd) != 0) {
    ::close(fd);
    fail(ErrorCode::IoError, "fsync failed on " + path.string());
  }
  ::close(fd);
}

}  // namespace

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::AwaitingPrompt: return "AWAITING_PROMPT";
    case SessionStatus::GraphReview: return "GRAPH_REVIEW";
    case SessionStatus::Generated: return "GENERATED";
  }
  return "AWAITING_PROMPT";
}

SessionStatus parse_session_status(std::string_view s) {
  if (s == "AWAITING_PROMPT") return SessionStatus::AwaitingPrompt;
  if (s == "GRAPH_REVIEW") return SessionStatus::GraphReview;
  if (s == "GENERATED") return SessionStatus::Generated;
  fail(ErrorCode::MalformedDocument, "unknown session status '" + std::string(s) + "'");
}

json to_json(const NodeEdit& e) {
  return std::visit(overloaded{
                        [](const edit::AddNode& a) {
                          json j{{"op", "ADD_NODE"}, {"node", to_json(a.node)}};
                          if (a.intent_id) j["intent_id"] = *a.intent_id;
                          return j;
                        },
                        [](const edit::DeleteNode& d) { return json{{"op", "DELETE_NODE"}, {"id", d.id}}; },
                        [](const edit::EditLabel& l) {
                          json j{{"op", "EDIT_LABEL"}, {"id", l.id}, {"label", l.label}};
                          if (l.detail) j["detail"] = *l.detail;
                          return j;
                        },
                        [](const edit::AddEdge& a) { return json{{"op", "ADD_EDGE"}, {"edge", to_json(a.edge)}}; },
                        [](const edit::DeleteEdge& d) {
                          return json{{"op", "DELETE_EDGE"}, {"edge", to_json(d.edge)}};
                        },
                    },
                    e);
}

NodeEdit node_edit_from_json(const json& doc) {
  try {
    const std::string op = doc.at("op").get<std::string>();
    if (op == "ADD_NODE") {
      edit::AddNode a;
      const json& n = doc.at("node");
      a.node.id = n.value("id", "");
      a.node.label = n.at("label").get<std::string>();
      a.node.detail = n.value("detail", "");
      a.node.origin = TaskOrigin::UserAdded;
      if (doc.contains("intent_id") && !doc["intent_id"].is_null()) a.intent_id = doc["intent_id"].get<std::string>();
      return a;
    }
    if (op == "DELETE_NODE") return edit::DeleteNode{doc.at("id").get<std::string>()};
    if (op == "EDIT_LABEL") {
      edit::EditLabel l{doc.at("id").get<std::string>(), doc.at("label").get<std::string>(), std::nullopt};
      if (doc.contains("detail")) l.detail = doc["detail"].get<std::string>();
      return l;
    }
    if (op == "ADD_EDGE") return edit::AddEdge{task_edge_from_json(doc.at("edge"))};
    if (op == "DELETE_EDGE") return edit::DeleteEdge{task_edge_from_json(doc.at("edge"))};
    fail(ErrorCode::MalformedDocument, "unknown edit op '" + op + "'");
  } catch (const json::exception& ex) {
    fail(ErrorCode::MalformedDocument, std::string("bad node edit: ") + ex.what());
  }
}

std::vector<NodeEdit> node_edits_from_json(const json& doc) {
  const json* list = &doc;
  if (doc.is_object()) {
    auto it = doc.find("edits");
    if (it == doc.end()) fail(ErrorCode::MalformedDocument, "edit document needs an 'edits' array");
    list = &*it;
  }
  if (!list->is_array()) fail(ErrorCode::MalformedDocument, "edits must be an array");
  std::vector<NodeEdit> out;
  for (const auto& j : *list) out.push_back(node_edit_from_json(j));
  return out;
}

bool is_structural(const NodeEdit& e) { return !std::holds_alternative<edit::EditLabel>(e); }

bool Session::operator==(const Session& o) const {
  return id == o.id && status == o.status && transcript == o.transcript && current_triple == o.current_triple &&
         current_view == o.current_view && focus == o.focus && pending_edits == o.pending_edits &&
         round_base == o.round_base && retired_ids == o.retired_ids && next_user_node == o.next_user_node &&
         seq == o.seq;
}

json to_json(const Session& s) {
  json rounds = json::array();
  for (const auto& r : s.transcript) rounds.push_back(round_to_json(r));
  return {{"id", s.id},
          {"status", to_string(s.status)},
          {"transcript", std::move(rounds)},
          {"current_triple", s.current_triple ? to_json(*s.current_triple) : json(nullptr)},
          {"current_view", to_json(s.current_view)},
          {"focus", s.focus},
          {"pending_edits", to_json(s.pending_edits)},
          {"round_base", to_json(s.round_base)},
          {"retired_ids", s.retired_ids},
          {"next_user_node", s.next_user_node},
          {"seq", s.seq}};
}

Session session_from_json(const json& doc) {
  Session s;
  try {
    s.id = doc.at("id").get<std::string>();
    s.status = parse_session_status(doc.at("status").get<std::string>());
    for (const auto& r : doc.at("transcript")) s.transcript.push_back(round_from_json(r));
    if (!doc.at("current_triple").is_null()) s.current_triple = validate_triple(doc.at("current_triple"));
    s.current_view = simplified_view_from_json(doc.at("current_view"));
    s.focus = doc.at("focus").get<FocusSet>();
    s.pending_edits = graph_delta_from_json(doc.at("pending_edits"));
    s.round_base = graph_from_json(doc.at("round_base"));
    s.retired_ids = doc.at("retired_ids").get<std::set<NodeId>>();
    s.next_user_node = doc.at("next_user_node").get<std::int64_t>();
    s.seq = doc.at("seq").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    fail(ErrorCode::MalformedDocument, std::string("bad session document: ") + ex.what());
  }
  return s;
}

void apply_event(Session& s, const json& event) {
  const std::string type = event.at("type").get<std::string>();
  const json& d = event.at("data");
  if (type == "created") {
    s = Session{};
    s.id = d.at("id").get<std::string>();
  } else if (type == "prompt") {
    SessionRound r;
    r.prompt = d.at("prompt").get<std::string>();
    r.path = d.at("path").get<std::string>() == "TEACHER" ? ExtractionPath::Teacher : ExtractionPath::Student;
    r.updates = updates_from_json(d.at("updates"));
    r.tracker_fallback = d.at("tracker_fallback").get<bool>();
    Triple t = validate_triple(d.at("triple"));
    r.round = t.round;
    s.transcript.push_back(std::move(r));
    s.focus = d.at("focus").get<FocusSet>();
    s.current_view = simplify(t, s.focus);
    s.round_base = t.graph;
    s.pending_edits = {};
    s.current_triple = std::move(t);
    s.status = SessionStatus::GraphReview;
  } else if (type == "edits") {
    Triple t = validate_triple(d.at("triple"));
    for (const auto& e : node_edits_from_json(d.at("edits")))
      if (auto* del = std::get_if<edit::DeleteNode>(&e)) s.retired_ids.insert(del->id);
    s.next_user_node = d.at("next_user_node").get<std::int64_t>();
    if (d.at("structural").get<bool>())
      s.current_view = simplify(t, s.focus);
    else
      patch_labels(s.current_view, t.graph);
    s.pending_edits = diff_graphs(s.round_base, t.graph);
    s.current_triple = std::move(t);
  } else if (type == "modify") {
    Triple t = validate_triple(d.at("triple"));
    s.focus = d.at("focus").get<FocusSet>();
    s.current_view = simplify(t, s.focus);
    s.pending_edits = diff_graphs(s.round_base, t.graph);
    s.current_triple = std::move(t);
  } else if (type == "confirm") {
    auto& r = s.transcript.back();
    r.code = d.at("code").get<std::string>();
    r.conditioning.clear();
    for (const auto& m : d.at("conditioning")) r.conditioning.push_back(chat_message_from_json(m));
    s.pending_edits = {};
    s.round_base = s.current_triple->graph;
    s.status = SessionStatus::Generated;
  } else if (type == "focus") {
    s.focus = d.at("focus").get<FocusSet>();
    s.current_view = simplify(*s.current_triple, s.focus);
  } else {
    fail(ErrorCode::MalformedDocument, "unknown session event '" + type + "'");
  }
  s.seq = event.at("seq").get<std::uint64_t>();
}

SessionStore::SessionStore(std::filesystem::path directory, std::size_t snapshot_every)
    : dir_(std::move(directory)), snapshot_every_(snapshot_every == 0 ? 1 : snapshot_every) {
  std::filesystem::create_directories(dir_);
}

void SessionStore::append(const Session& after, const json& event) {
  auto sdir = dir_ / after.id;
  std::filesystem::create_directories(sdir);
  durable_write(sdir / "events.jsonl", event.dump() + "\n", true);
  if (after.seq % snapshot_every_ == 0) {
    auto tmp = sdir / "snapshot.json.tmp";
    durable_write(tmp, to_json(after).dump(), false);
    std::filesystem::rename(tmp, sdir / "snapshot.json");
  }
}

Session SessionStore::load(const std::string& id) const {
  auto sdir = dir_ / id;
  if (!std::filesystem::exists(sdir)) fail(ErrorCode::UnknownSession, "no stored session '" + id + "'");
  Session s;
  if (std::ifstream snap(sdir / "snapshot.json"); snap) {
    std::stringstream buf;
    buf << snap.rdbuf();
    s = session_from_json(json::parse(buf.str()));
  }
  auto log_path = sdir / "events.jsonl";
  std::ifstream in(log_path, std::ios::binary);
  if (!in) return s;
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  std::size_t pos = 0, good = 0;
  while (pos < data.size()) {
    auto nl = data.find('\n', pos);
    if (nl == std::string::npos) break;  // torn tail
    json event;
    try {
      event = json::parse(data.begin() + static_cast<std::ptrdiff_t>(pos),
                          data.begin() + static_cast<std::ptrdiff_t>(nl));
    } catch (const json::exception&) {
      if (data.find('\n', nl + 1) != std::string::npos)
        fail(ErrorCode::IoError, "corrupt event in " + log_path.string());
      break;
    }
    if (event.at("seq").get<std::uint64_t>() > s.seq) apply_event(s, event);
    pos = good = nl + 1;
  }
  if (good < data.size()) std::filesystem::resize_file(log_path, good);
  if (s.id.empty()) fail(ErrorCode::UnknownSession, "stored session '" + id + "' has no events");
  return s;
}

std::vector<std::string> SessionStore::list() const {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir_))
    if (e.is_directory() && std::filesystem::exists(e.path() / "events.jsonl"))
      out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

SessionManager::SessionManager(Gateway& gateway, const TemplateStore& templates,
                               std::optional<std::filesystem::path> store_dir, SessionOptions options)
    : gateway_(gateway), templates_(templates), options_(options) {
  if (!store_dir) return;
  store_.emplace(*store_dir, options_.snapshot_every);
  for (const auto& id : store_->list()) {
    Session s;
    try {
      s = store_->load(id);
    } catch (const Error& err) {
      if (err.code() == ErrorCode::UnknownSession) continue;  // created dir, no committed event
      throw;
    }
    auto e = std::make_shared<Entry>();
    e->session = std::move(s);
    sessions_.emplace(id, std::move(e));
    if (id.size() > 1 && id[0] == 's') {
      try {
        next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(id.substr(1)) + 1);
      } catch (const std::exception&) {
      }
    }
  }
}

ExtractionPath SessionManager::path() const {
  if (options_.path) return *options_.path;
  return gateway_.has(ModelRole::Student) ? ExtractionPath::Student : ExtractionPath::Teacher;
}

std::shared_ptr<SessionManager::Entry> SessionManager::entry(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::UnknownSession, "no session '" + id + "'");
  return it->second;
}

void SessionManager::commit(Entry& e, json event) {
  event["seq"] = e.session.seq + 1;
  Session next = e.session;
  apply_event(next, event);
  if (store_) store_->append(next, event);
  e.session = std::move(next);

  json note{{"session", e.session.id},
            {"seq", e.session.seq},
            {"type", event["type"]},
            {"status", to_string(e.session.status)}};
  std::vector<SessionListener> listeners;
  {
    std::lock_guard lock(listeners_mutex_);
    for (const auto& [token, l] : listeners_) listeners.push_back(l);
  }
  for (const auto& l : listeners) l(e.session.id, note);
  if (after_commit) after_commit(e.session);
}

std::string SessionManager::create_session() {
  auto e = std::make_shared<Entry>();
  std::string id;
  {
    std::lock_guard lock(mutex_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(next_id_++));
    id = buf;
    sessions_.emplace(id, e);
  }
  std::lock_guard lock(e->mutex);
  commit(*e, {{"type", "created"}, {"data", {{"id", id}}}});
  return id;
}

PromptResult SessionManager::submit_prompt(const std::string& id, const std::string& prompt) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  const Session& s = e->session;
  require_status(s, {SessionStatus::AwaitingPrompt, SessionStatus::Generated}, "submit_prompt");
  if (blank(prompt)) fail(ErrorCode::PreconditionFailed, "prompt is empty");

  std::vector<IntentUpdate> updates;
  bool fallback = false;
  std::optional<Triple> prev;
  TrackingResult tracked;
  if (s.current_triple) {
    const Triple& cur = *s.current_triple;
    try {
      updates = propose_updates(cur.intent_tree, prompt, gateway_, templates_);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::UnparseableProposal) throw;
      updates = {IntentUpdate{update::Noop{}, Provenance::LlmProposed}};
      fallback = true;
    }
    tracked = apply_updates(cur.intent_tree, updates);
    IntentTree tree = tracked.tree;
    tree.version = cur.round;
    prev = make_triple(tree, cur.graph, mapping_within(remap_merged(cur.mapping, tracked.merges), tree), cur.round);
  }

  ExtractionPath p = path();
  Triple next;
  FocusSet focus;
  try {
    Extractor extractor(gateway_, templates_);
    auto rec = p == ExtractionPath::Teacher ? extractor.extract_teacher(prompt, prev)
                                            : extractor.extract_student(prompt, prev);
    next = std::move(rec.triple);
    if (prev) {
      next = make_triple(tracked.tree, next.graph, mapping_within(next.mapping, tracked.tree), next.round);
      focus = tracked.focus;
    } else {
      focus = all_intents(next.intent_tree);
    }
  } catch (const Error& err) {
    fail(ErrorCode::ExtractionFailed, std::string(error_code_name(err.code())) + ": " + err.detail());
  }

  UnderstandingGraph before = s.current_triple ? s.current_triple->graph : UnderstandingGraph{};
  commit(*e, {{"type", "prompt"},
              {"data",
               {{"prompt", prompt},
                {"path", to_string(p)},
                {"updates", updates_to_json(updates)["updates"]},
                {"tracker_fallback", fallback},
                {"triple", to_json(next)},
                {"focus", focus}}}});
  const Session& after = e->session;
  return {*after.current_triple, after.current_view, diff_graphs(before, after.current_triple->graph), after.focus,
          fallback};
}

EditResult SessionManager::apply_node_edits(const std::string& id, const std::vector<NodeEdit>& edits) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  const Session& s = e->session;
  require_status(s, {SessionStatus::GraphReview}, "apply_node_edits");
  if (edits.empty()) invalid_edit("edit list is empty");

  const Triple& cur = *s.current_triple;
  const IntentTree& tree = cur.intent_tree;
  UnderstandingGraph g = cur.graph;
  Mapping m = cur.mapping;
  std::set<NodeId> retired = s.retired_ids;
  std::int64_t next_user = s.next_user_node;
  std::vector<NodeEdit> resolved;
  bool structural = false;

  auto claim = [&](const NodeId& intent, const NodeId& task) {
    for (auto& entry : m.entries)
      if (entry.intent_id == intent) {
        entry.task_node_ids.push_back(task);
        return;
      }
    m.entries.push_back({intent, {task}});
  };
  auto require_node = [&](const NodeId& nid) {
    if (!g.contains(nid)) invalid_edit("unknown task node '" + nid + "'");
  };

  for (const auto& ed : edits) {
    structural = structural || is_structural(ed);
    std::visit(overloaded{
                   [&](const edit::AddNode& a) {
                     TaskNode n = a.node;
                     if (blank(n.label)) invalid_edit("node label is empty");
                     if (n.id.empty()) {
                       do n.id = "u" + std::to_string(next_user++);
                       while (g.contains(n.id) || retired.count(n.id));
                     } else if (g.contains(n.id) || retired.count(n.id)) {
                       invalid_edit("node id '" + n.id + "' is already in use");
                     }
                     n.origin = TaskOrigin::UserAdded;
                     NodeId owner;
                     if (a.intent_id) {
                       if (!tree.contains(*a.intent_id)) invalid_edit("unknown intent '" + *a.intent_id + "'");
                       owner = *a.intent_id;
                     } else {
                       owner = s.focus.size() == 1 ? *s.focus.begin() : tree.root;
                     }
                     g.nodes.push_back(n);
                     claim(owner, n.id);
                     resolved.push_back(edit::AddNode{n, owner});
                   },
                   [&](const edit::DeleteNode& d) {
                     require_node(d.id);
                     std::erase_if(g.nodes, [&](const TaskNode& n) { return n.id == d.id; });
                     std::erase_if(g.edges, [&](const TaskEdge& x) { return x.src == d.id || x.dst == d.id; });
                     for (auto& entry : m.entries) std::erase(entry.task_node_ids, d.id);
                     retired.insert(d.id);
                     resolved.push_back(d);
                   },
                   [&](const edit::EditLabel& l) {
                     require_node(l.id);
                     if (blank(l.label)) invalid_edit("node label is empty");
                     TaskNode* n = g.find(l.id);
                     n->label = l.label;
                     if (l.detail) n->detail = *l.detail;
                     resolved.push_back(l);
                   },
                   [&](const edit::AddEdge& a) {
                     require_node(a.edge.src);
                     require_node(a.edge.dst);
                     if (a.edge.src == a.edge.dst) invalid_edit("self-loop on '" + a.edge.src + "'");
                     if (g.has_edge(a.edge)) invalid_edit("edge " + a.edge.src + "->" + a.edge.dst + " already exists");
                     g.edges.push_back(a.edge);
                     resolved.push_back(a);
                   },
                   [&](const edit::DeleteEdge& d) {
                     if (!g.has_edge(d.edge)) invalid_edit("no edge " + d.edge.src + "->" + d.edge.dst);
                     std::erase(g.edges, d.edge);
                     resolved.push_back(d);
                   },
               },
               ed);
  }

  Triple next;
  try {
    next = make_triple(tree, std::move(g), std::move(m), cur.round);
  } catch (const Error& err) {
    invalid_edit(err.detail());
  }
  json edits_doc = json::array();
  for (const auto& r : resolved) edits_doc.push_back(to_json(r));
  commit(*e, {{"type", "edits"},
              {"data",
               {{"edits", std::move(edits_doc)},
                {"triple", to_json(next)},
                {"structural", structural},
                {"next_user_node", next_user}}}});
  return {*e->session.current_triple, e->session.current_view, structural};
}

ModifyResult SessionManager::modify_graph_nl(const std::string& id, const std::string& instruction) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  const Session& s = e->session;
  require_status(s, {SessionStatus::GraphReview}, "modify_graph_nl");
  if (blank(instruction)) fail(ErrorCode::PreconditionFailed, "instruction is empty");

  const Triple& cur = *s.current_triple;
  Extractor extractor(gateway_, templates_);
  Triple next = extractor.modify(cur, instruction).triple;
  for (auto& n : next.graph.nodes)
    if (!cur.graph.contains(n.id)) n.origin = TaskOrigin::NlModified;
  next = make_triple(next.intent_tree, next.graph, next.mapping, next.round);

  GraphDelta delta = diff_graphs(cur.graph, next.graph);
  FocusSet focus;
  for (const auto& nid : delta.touched_nodes()) focus.insert(next.ownership.owner.at(nid));
  for (const auto& nid : delta.removed_nodes)
    if (auto it = cur.ownership.owner.find(nid); it != cur.ownership.owner.end() && next.intent_tree.contains(it->second))
      focus.insert(it->second);
  if (focus.empty())
    for (const auto& f : s.focus)
      if (next.intent_tree.contains(f)) focus.insert(f);

  commit(*e, {{"type", "modify"}, {"data", {{"instruction", instruction}, {"triple", to_json(next)}, {"focus", focus}}}});
  return {*e->session.current_triple, e->session.current_view, delta};
}

ConfirmResult SessionManager::confirm_graph(const std::string& id) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  const Session& s = e->session;
  require_status(s, {SessionStatus::GraphReview, SessionStatus::Generated}, "confirm_graph");

  const Triple& cur = *s.current_triple;
  ChatRequest request;
  request.role = ModelRole::Conversational;
  request.purpose = "confirm_generate";
  request.context = {{"triple", to_json(cur)}};
  request.messages = templates_.render("confirm_generate", {{"triple", to_document(cur)}});
  for (std::size_t i = 0; i < s.transcript.size(); ++i) {
    request.messages.push_back({"user", s.transcript[i].prompt});
    if (i + 1 < s.transcript.size() && s.transcript[i].code)
      request.messages.push_back({"assistant", *s.transcript[i].code});
  }
  ChatExchange ex = gateway_.complete(request);

  json conditioning = json::array();
  for (const auto& m : request.messages) conditioning.push_back(to_json(m));
  commit(*e, {{"type", "confirm"}, {"data", {{"code", ex.response}, {"conditioning", std::move(conditioning)}}}});
  return {ex.response, request.messages};
}

SimplifiedView SessionManager::focus_intent(const std::string& id, const NodeId& intent_id) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  const Session& s = e->session;
  require_status(s, {SessionStatus::GraphReview, SessionStatus::Generated}, "focus_intent");
  const IntentTree& tree = s.current_triple->intent_tree;
  if (!tree.contains(intent_id)) fail(ErrorCode::UnknownIntentId, "no intent '" + intent_id + "'");
  auto sub = tree.preorder_from(intent_id);
  FocusSet focus(sub.begin(), sub.end());
  commit(*e, {{"type", "focus"}, {"data", {{"intent_id", intent_id}, {"focus", focus}}}});
  return e->session.current_view;
}

std::vector<NodeId> SessionManager::expand_supernode(const std::string& id, const NodeId& supernode_id) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  return taskalign::expand_supernode(e->session.current_view, supernode_id);
}

Session SessionManager::get(const std::string& id) const {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  return e->session;
}

std::vector<std::string> SessionManager::list() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, e] : sessions_) out.push_back(id);
  return out;
}

bool SessionManager::contains(const std::string& id) const {
  std::lock_guard lock(mutex_);
  return sessions_.count(id) != 0;
}

std::size_t SessionManager::subscribe(SessionListener listener) {
  std::lock_guard lock(listeners_mutex_);
  listeners_.emplace(next_token_, std::move(listener));
  return next_token_++;
}

void SessionManager::unsubscribe(std::size_t token) {
  std::lock_guard lock(listeners_mutex_);
  listeners_.erase(token);
}

}  // namespace taskalign
