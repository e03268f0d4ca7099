#include "taskalign/triple.hpp"

#include <algorithm>
#include <functional>

#include "taskalign/errors.hpp"

namespace taskalign {

namespace {

std::string trim(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

const json& require(const json& doc, const char* key, const char* where) {
  if (!doc.is_object()) fail(ErrorCode::MalformedDocument, std::string(where) + " must be an object");
  auto it = doc.find(key);
  if (it == doc.end())
    fail(ErrorCode::MalformedDocument, std::string(where) + " is missing '" + key + "'");
  return *it;
}

std::string require_string(const json& doc, const char* key, const char* where) {
  const json& v = require(doc, key, where);
  if (!v.is_string())
    fail(ErrorCode::MalformedDocument, std::string(where) + "." + key + " must be a string");
  return v.get<std::string>();
}

std::string optional_string(const json& doc, const char* key, const char* where) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return {};
  if (!it->is_string())
    fail(ErrorCode::MalformedDocument, std::string(where) + "." + key + " must be a string");
  return it->get<std::string>();
}

std::vector<NodeId> id_list(const json& v, const std::string& where) {
  if (!v.is_array()) fail(ErrorCode::MalformedDocument, where + " must be an array");
  std::vector<NodeId> out;
  out.reserve(v.size());
  for (const auto& item : v) {
    if (!item.is_string()) fail(ErrorCode::MalformedDocument, where + " must hold string ids");
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::int64_t require_nonnegative_int(const json& doc, const char* key, const char* where) {
  const json& v = require(doc, key, where);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    fail(ErrorCode::MalformedDocument,
         std::string(where) + "." + key + " must be a non-negative integer");
  return v.get<std::int64_t>();
}

}  // namespace

std::string_view to_string(IntentState s) {
  return s == IntentState::Completed ? "COMPLETED" : "NOT_COMPLETED";
}

std::string_view to_string(TaskOrigin o) {
  switch (o) {
    case TaskOrigin::Extracted: return "EXTRACTED";
    case TaskOrigin::UserAdded: return "USER_ADDED";
    case TaskOrigin::NlModified: return "NL_MODIFIED";
  }
  return "EXTRACTED";
}

std::string_view to_string(EdgeKind k) {
  return k == EdgeKind::DataFlow ? "DATA_FLOW" : "DEPENDENCY";
}

IntentState parse_intent_state(std::string_view s) {
  if (s == "COMPLETED") return IntentState::Completed;
  if (s == "NOT_COMPLETED" || s == "NOT COMPLETED") return IntentState::NotCompleted;
  fail(ErrorCode::MalformedDocument, "unknown intent state '" + std::string(s) + "'");
}

TaskOrigin parse_task_origin(std::string_view s) {
  if (s == "EXTRACTED") return TaskOrigin::Extracted;
  if (s == "USER_ADDED") return TaskOrigin::UserAdded;
  if (s == "NL_MODIFIED") return TaskOrigin::NlModified;
  fail(ErrorCode::MalformedDocument, "unknown task origin '" + std::string(s) + "'");
}

EdgeKind parse_edge_kind(std::string_view s) {
  if (s == "DEPENDENCY") return EdgeKind::Dependency;
  if (s == "DATA_FLOW") return EdgeKind::DataFlow;
  fail(ErrorCode::MalformedDocument, "unknown edge kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// IntentTree

const IntentNode& IntentTree::node(const NodeId& id) const {
  auto it = nodes.find(id);
  if (it == nodes.end()) fail(ErrorCode::UnknownIntentId, "no intent node '" + id + "'");
  return it->second;
}

IntentNode& IntentTree::node(const NodeId& id) {
  auto it = nodes.find(id);
  if (it == nodes.end()) fail(ErrorCode::UnknownIntentId, "no intent node '" + id + "'");
  return it->second;
}

std::vector<NodeId> IntentTree::preorder_from(const NodeId& start) const {
  std::vector<NodeId> order;
  if (!contains(start)) return order;
  std::vector<NodeId> stack{start};
  std::set<NodeId> seen;
  while (!stack.empty()) {
    NodeId id = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(id).second) continue;
    order.push_back(id);
    auto it = nodes.find(id);
    if (it == nodes.end()) continue;
    const auto& ch = it->second.children;
    for (auto c = ch.rbegin(); c != ch.rend(); ++c)
      if (contains(*c)) stack.push_back(*c);
  }
  return order;
}

std::vector<NodeId> IntentTree::preorder() const { return preorder_from(root); }

std::map<NodeId, NodeId> IntentTree::parent_map() const {
  std::map<NodeId, NodeId> parents;
  for (const auto& [id, n] : nodes)
    for (const auto& c : n.children) parents.emplace(c, id);
  return parents;
}

std::optional<NodeId> IntentTree::parent_of(const NodeId& id) const {
  for (const auto& [pid, n] : nodes)
    if (std::find(n.children.begin(), n.children.end(), id) != n.children.end()) return pid;
  return std::nullopt;
}

std::vector<NodeId> IntentTree::leaves() const {
  std::vector<NodeId> out;
  for (const auto& id : preorder())
    if (node(id).children.empty()) out.push_back(id);
  return out;
}

bool IntentTree::is_ancestor(const NodeId& ancestor, const NodeId& n) const {
  auto parents = parent_map();
  NodeId cur = n;
  for (std::size_t guard = 0; guard <= nodes.size(); ++guard) {
    if (cur == ancestor) return true;
    auto it = parents.find(cur);
    if (it == parents.end()) return false;
    cur = it->second;
  }
  return false;
}

// ---------------------------------------------------------------------------
// UnderstandingGraph

const TaskNode* UnderstandingGraph::find(const NodeId& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

TaskNode* UnderstandingGraph::find(const NodeId& id) {
  for (auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

bool UnderstandingGraph::has_edge(const TaskEdge& e) const {
  return std::find(edges.begin(), edges.end(), e) != edges.end();
}

std::vector<NodeId> UnderstandingGraph::node_ids() const {
  std::vector<NodeId> ids;
  ids.reserve(nodes.size());
  for (const auto& n : nodes) ids.push_back(n.id);
  return ids;
}

bool UnderstandingGraph::has_cycle() const {
  std::map<NodeId, std::vector<NodeId>> adj;
  for (const auto& e : edges) adj[e.src].push_back(e.dst);
  // 0 = unvisited, 1 = on stack, 2 = done
  std::map<NodeId, int> color;
  std::function<bool(const NodeId&)> visit = [&](const NodeId& v) {
    color[v] = 1;
    for (const auto& w : adj[v]) {
      int c = color[w];
      if (c == 1) return true;
      if (c == 0 && visit(w)) return true;
    }
    color[v] = 2;
    return false;
  };
  for (const auto& n : nodes)
    if (color[n.id] == 0 && visit(n.id)) return true;
  return false;
}

bool UnderstandingGraph::operator==(const UnderstandingGraph& other) const {
  if (nodes.size() != other.nodes.size() || edges.size() != other.edges.size()) return false;
  auto a = nodes, b = other.nodes;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) return false;
  auto ea = edges, eb = other.edges;
  std::sort(ea.begin(), ea.end());
  std::sort(eb.begin(), eb.end());
  return ea == eb;
}

// ---------------------------------------------------------------------------
// Mapping / ownership

const MappingEntry* Mapping::find(const NodeId& intent_id) const {
  for (const auto& e : entries)
    if (e.intent_id == intent_id) return &e;
  return nullptr;
}

bool Mapping::operator==(const Mapping& other) const {
  auto canon = [](const Mapping& m) {
    std::map<NodeId, std::set<NodeId>> out;
    for (const auto& e : m.entries) out[e.intent_id].insert(e.task_node_ids.begin(), e.task_node_ids.end());
    return out;
  };
  return canon(*this) == canon(other);
}

std::vector<NodeId> Ownership::owned_by(const NodeId& intent_id) const {
  std::vector<NodeId> out;
  for (const auto& [task, owner_id] : owner)
    if (owner_id == intent_id) out.push_back(task);
  return out;
}

Ownership resolve_ownership(const IntentTree& tree, const UnderstandingGraph& graph,
                            const Mapping& mapping) {
  Ownership result;
  std::map<NodeId, const MappingEntry*> by_intent;
  for (const auto& e : mapping.entries) by_intent.emplace(e.intent_id, &e);
  for (const auto& intent : tree.preorder()) {
    auto it = by_intent.find(intent);
    if (it == by_intent.end()) continue;
    for (const auto& task : it->second->task_node_ids) {
      if (!graph.contains(task)) continue;
      auto [pos, inserted] = result.owner.emplace(task, intent);
      if (!inserted && pos->second != intent) result.referenced_by[task].push_back(intent);
    }
  }
  for (const auto& n : graph.nodes) result.owner.emplace(n.id, tree.root);
  return result;
}

// ---------------------------------------------------------------------------
// Validation

void validate_intent_tree(const IntentTree& tree) {
  if (tree.version < 0) fail(ErrorCode::MalformedDocument, "intent tree version must be >= 0");
  if (!tree.contains(tree.root))
    fail(ErrorCode::DanglingReference, "intent tree root '" + tree.root + "' is not a node");
  std::map<NodeId, NodeId> parent;
  for (const auto& [id, n] : tree.nodes) {
    if (n.id != id) fail(ErrorCode::MalformedDocument, "intent node key/id mismatch for '" + id + "'");
    if (trim(n.text).empty()) fail(ErrorCode::MalformedDocument, "intent node '" + id + "' has empty text");
    std::set<NodeId> local;
    for (const auto& c : n.children) {
      if (!tree.contains(c))
        fail(ErrorCode::DanglingReference, "intent node '" + id + "' lists unknown child '" + c + "'");
      if (!local.insert(c).second)
        fail(ErrorCode::CycleInIntentTree, "intent node '" + id + "' lists child '" + c + "' twice");
      auto [it, inserted] = parent.emplace(c, id);
      if (!inserted)
        fail(ErrorCode::CycleInIntentTree,
             "intent node '" + c + "' has two parents ('" + it->second + "', '" + id + "')");
    }
  }
  if (parent.count(tree.root))
    fail(ErrorCode::CycleInIntentTree, "intent tree root '" + tree.root + "' has a parent");
  if (tree.preorder().size() != tree.nodes.size())
    fail(ErrorCode::CycleInIntentTree, "intent tree has nodes unreachable from the root");
}

void validate_graph(const UnderstandingGraph& graph) {
  std::set<NodeId> ids;
  for (const auto& n : graph.nodes) {
    if (n.id.empty()) fail(ErrorCode::MalformedDocument, "task node with empty id");
    if (!ids.insert(n.id).second) fail(ErrorCode::DuplicateId, "duplicate task node id '" + n.id + "'");
    if (trim(n.label).empty()) fail(ErrorCode::MalformedDocument, "task node '" + n.id + "' has empty label");
  }
  std::set<TaskEdge> seen;
  for (const auto& e : graph.edges) {
    if (!ids.count(e.src) || !ids.count(e.dst))
      fail(ErrorCode::DanglingReference, "edge " + e.src + "->" + e.dst + " references a missing node");
    if (e.src == e.dst) fail(ErrorCode::MalformedDocument, "self-loop edge on '" + e.src + "'");
    if (!seen.insert(e).second)
      fail(ErrorCode::DuplicateId, "duplicate edge " + e.src + "->" + e.dst + " (" +
                                       std::string(to_string(e.kind)) + ")");
  }
}

Triple make_triple(IntentTree tree, UnderstandingGraph graph, Mapping mapping, std::int64_t round) {
  validate_intent_tree(tree);
  validate_graph(graph);
  if (round != tree.version)
    fail(ErrorCode::MalformedDocument, "round " + std::to_string(round) +
                                           " does not match intent tree version " +
                                           std::to_string(tree.version));
  std::set<NodeId> seen_intents;
  std::vector<MappingEntry> kept;
  for (auto& e : mapping.entries) {
    if (!tree.contains(e.intent_id))
      fail(ErrorCode::DanglingReference, "mapping references unknown intent '" + e.intent_id + "'");
    if (!seen_intents.insert(e.intent_id).second)
      fail(ErrorCode::DuplicateId, "mapping lists intent '" + e.intent_id + "' twice");
    std::set<NodeId> local;
    for (const auto& t : e.task_node_ids) {
      if (!graph.contains(t))
        fail(ErrorCode::DanglingReference, "mapping references unknown task node '" + t + "'");
      if (!local.insert(t).second)
        fail(ErrorCode::DuplicateId, "mapping entry '" + e.intent_id + "' lists '" + t + "' twice");
    }
    if (!e.task_node_ids.empty()) kept.push_back(std::move(e));
  }
  mapping.entries = std::move(kept);

  Triple t;
  t.ownership = resolve_ownership(tree, graph, mapping);
  t.intent_tree = std::move(tree);
  t.graph = std::move(graph);
  t.mapping = std::move(mapping);
  t.round = round;
  return t;
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const IntentTree& tree) {
  json nodes = json::array();
  for (const auto& id : tree.preorder()) {
    const auto& n = tree.node(id);
    nodes.push_back({{"id", n.id},
                     {"text", n.text},
                     {"state", to_string(n.state)},
                     {"children", n.children}});
  }
  // Unreachable nodes only exist in invalid trees; keep them visible.
  for (const auto& [id, n] : tree.nodes) {
    bool listed = false;
    for (const auto& j : nodes) listed = listed || j["id"] == id;
    if (!listed)
      nodes.push_back({{"id", n.id}, {"text", n.text}, {"state", to_string(n.state)}, {"children", n.children}});
  }
  return {{"root", tree.root}, {"version", tree.version}, {"nodes", std::move(nodes)}};
}

json to_json(const TaskNode& n) {
  json j{{"id", n.id}, {"label", n.label}, {"origin", to_string(n.origin)}};
  if (!n.detail.empty()) j["detail"] = n.detail;
  return j;
}

json to_json(const TaskEdge& e) {
  return {{"src", e.src}, {"dst", e.dst}, {"kind", to_string(e.kind)}};
}

json to_json(const UnderstandingGraph& graph) {
  json nodes = json::array(), edges = json::array();
  for (const auto& n : graph.nodes) nodes.push_back(to_json(n));
  for (const auto& e : graph.edges) edges.push_back(to_json(e));
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

json to_json(const Mapping& mapping) {
  json entries = json::array();
  for (const auto& e : mapping.entries)
    entries.push_back({{"intent_id", e.intent_id}, {"task_node_ids", e.task_node_ids}});
  return {{"entries", std::move(entries)}};
}

json to_json(const Triple& t) {
  return {{"intent_tree", to_json(t.intent_tree)},
          {"graph", to_json(t.graph)},
          {"mapping", to_json(t.mapping)},
          {"round", t.round}};
}

IntentTree intent_tree_from_json(const json& doc) {
  IntentTree tree;
  tree.root = require_string(doc, "root", "intent_tree");
  tree.version = require_nonnegative_int(doc, "version", "intent_tree");
  const json& nodes = require(doc, "nodes", "intent_tree");
  if (!nodes.is_array()) fail(ErrorCode::MalformedDocument, "intent_tree.nodes must be an array");
  for (const auto& jn : nodes) {
    IntentNode n;
    n.id = require_string(jn, "id", "intent node");
    if (n.id.empty()) fail(ErrorCode::MalformedDocument, "intent node with empty id");
    n.text = require_string(jn, "text", "intent node");
    if (auto it = jn.find("state"); it != jn.end()) {
      if (!it->is_string()) fail(ErrorCode::MalformedDocument, "intent node state must be a string");
      n.state = parse_intent_state(it->get<std::string>());
    }
    if (auto it = jn.find("children"); it != jn.end() && !it->is_null())
      n.children = id_list(*it, "intent node '" + n.id + "' children");
    NodeId id = n.id;
    if (!tree.nodes.emplace(id, std::move(n)).second)
      fail(ErrorCode::DuplicateId, "duplicate intent node id '" + id + "'");
  }
  return tree;
}

TaskNode task_node_from_json(const json& jn) {
  TaskNode n;
  n.id = require_string(jn, "id", "task node");
  n.label = require_string(jn, "label", "task node");
  n.detail = optional_string(jn, "detail", "task node");
  if (auto o = optional_string(jn, "origin", "task node"); !o.empty()) n.origin = parse_task_origin(o);
  return n;
}

TaskEdge task_edge_from_json(const json& je) {
  TaskEdge e;
  e.src = require_string(je, "src", "edge");
  e.dst = require_string(je, "dst", "edge");
  if (auto k = optional_string(je, "kind", "edge"); !k.empty()) e.kind = parse_edge_kind(k);
  return e;
}

UnderstandingGraph graph_from_json(const json& doc) {
  UnderstandingGraph g;
  const json& nodes = require(doc, "nodes", "graph");
  if (!nodes.is_array()) fail(ErrorCode::MalformedDocument, "graph.nodes must be an array");
  for (const auto& jn : nodes) g.nodes.push_back(task_node_from_json(jn));
  const json& edges = require(doc, "edges", "graph");
  if (!edges.is_array()) fail(ErrorCode::MalformedDocument, "graph.edges must be an array");
  for (const auto& je : edges) g.edges.push_back(task_edge_from_json(je));
  return g;
}

Mapping mapping_from_json(const json& doc) {
  Mapping m;
  const json& entries = require(doc, "entries", "mapping");
  if (!entries.is_array()) fail(ErrorCode::MalformedDocument, "mapping.entries must be an array");
  for (const auto& je : entries) {
    MappingEntry e;
    e.intent_id = require_string(je, "intent_id", "mapping entry");
    e.task_node_ids = id_list(require(je, "task_node_ids", "mapping entry"),
                              "mapping entry '" + e.intent_id + "' task_node_ids");
    m.entries.push_back(std::move(e));
  }
  return m;
}

Triple validate_triple(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::MalformedDocument, "triple document must be an object");
  auto tree = intent_tree_from_json(require(doc, "intent_tree", "triple"));
  auto graph = graph_from_json(require(doc, "graph", "triple"));
  auto mapping = mapping_from_json(require(doc, "mapping", "triple"));
  auto round = require_nonnegative_int(doc, "round", "triple");
  return make_triple(std::move(tree), std::move(graph), std::move(mapping), round);
}

Triple parse_triple(std::string_view text) {
  json doc = json::parse(text.begin(), text.end(), nullptr, false);
  if (doc.is_discarded()) fail(ErrorCode::MalformedDocument, "triple document is not valid JSON");
  return validate_triple(doc);
}

std::string to_document(const json& doc) { return doc.dump(2); }
std::string to_document(const Triple& triple) { return to_document(to_json(triple)); }

// ---------------------------------------------------------------------------
// Graph diffs

bool GraphDelta::empty() const {
  return added_nodes.empty() && removed_nodes.empty() && relabelled_nodes.empty() &&
         added_edges.empty() && removed_edges.empty();
}

std::set<NodeId> GraphDelta::touched_nodes() const {
  std::set<NodeId> out;
  for (const auto& n : added_nodes) out.insert(n.id);
  for (const auto& n : relabelled_nodes) out.insert(n.id);
  return out;
}

GraphDelta diff_graphs(const UnderstandingGraph& before, const UnderstandingGraph& after) {
  GraphDelta d;
  for (const auto& n : after.nodes) {
    const TaskNode* old = before.find(n.id);
    if (!old)
      d.added_nodes.push_back(n);
    else if (!(*old == n))
      d.relabelled_nodes.push_back(n);
  }
  for (const auto& n : before.nodes)
    if (!after.contains(n.id)) d.removed_nodes.push_back(n.id);
  for (const auto& e : after.edges)
    if (!before.has_edge(e)) d.added_edges.push_back(e);
  for (const auto& e : before.edges)
    if (!after.has_edge(e)) d.removed_edges.push_back(e);
  return d;
}

UnderstandingGraph apply_delta(const UnderstandingGraph& before, const GraphDelta& delta) {
  UnderstandingGraph g = before;
  std::set<NodeId> removed(delta.removed_nodes.begin(), delta.removed_nodes.end());
  std::erase_if(g.nodes, [&](const TaskNode& n) { return removed.count(n.id) != 0; });
  std::erase_if(g.edges, [&](const TaskEdge& e) {
    return removed.count(e.src) || removed.count(e.dst) ||
           std::find(delta.removed_edges.begin(), delta.removed_edges.end(), e) !=
               delta.removed_edges.end();
  });
  for (const auto& n : delta.relabelled_nodes)
    if (TaskNode* target = g.find(n.id)) *target = n;
  for (const auto& n : delta.added_nodes) g.nodes.push_back(n);
  for (const auto& e : delta.added_edges)
    if (!g.has_edge(e)) g.edges.push_back(e);
  return g;
}

json to_json(const GraphDelta& d) {
  json added = json::array(), relabelled = json::array(), added_edges = json::array(),
       removed_edges = json::array();
  for (const auto& n : d.added_nodes) added.push_back(to_json(n));
  for (const auto& n : d.relabelled_nodes) relabelled.push_back(to_json(n));
  for (const auto& e : d.added_edges) added_edges.push_back(to_json(e));
  for (const auto& e : d.removed_edges) removed_edges.push_back(to_json(e));
  return {{"added_nodes", std::move(added)},
          {"removed_nodes", d.removed_nodes},
          {"relabelled_nodes", std::move(relabelled)},
          {"added_edges", std::move(added_edges)},
          {"removed_edges", std::move(removed_edges)}};
}

GraphDelta graph_delta_from_json(const json& doc) {
  GraphDelta d;
  auto list = [&](const char* key) -> const json& {
    const json& v = require(doc, key, "graph_delta");
    if (!v.is_array()) fail(ErrorCode::MalformedDocument, std::string("graph_delta.") + key + " must be an array");
    return v;
  };
  for (const auto& j : list("added_nodes")) d.added_nodes.push_back(task_node_from_json(j));
  d.removed_nodes = id_list(list("removed_nodes"), "graph_delta.removed_nodes");
  for (const auto& j : list("relabelled_nodes")) d.relabelled_nodes.push_back(task_node_from_json(j));
  for (const auto& j : list("added_edges")) d.added_edges.push_back(task_edge_from_json(j));
  for (const auto& j : list("removed_edges")) d.removed_edges.push_back(task_edge_from_json(j));
  return d;
}

}  // namespace taskalign
