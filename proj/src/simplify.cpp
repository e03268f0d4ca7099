#include "taskalign/simplify.hpp"

#include <algorithm>

#include "taskalign/errors.hpp"

namespace taskalign {

namespace {

struct Collapse {
  NodeId intent;
  std::vector<NodeId> members;  // graph order
};

class Simplifier {
 public:
  Simplifier(const Triple& triple, const FocusSet& focus) : t_(triple), focus_(focus) {
    for (const auto& id : focus_)
      if (!t_.intent_tree.contains(id)) fail(ErrorCode::InvalidFocus, "focus id '" + id + "' is not an intent node");
  }

  SimplifiedView run() {
    const auto& tree = t_.intent_tree;
    for (const auto& child : tree.node(tree.root).children) visit(child);

    SimplifiedView view;
    view.focus = focus_;
    std::set<NodeId> task_ids;
    for (const auto& n : t_.graph.nodes) task_ids.insert(n.id);

    std::map<NodeId, std::size_t> collapse_of;  // task id -> index in collapses_
    for (std::size_t i = 0; i < collapses_.size(); ++i)
      for (const auto& m : collapses_[i].members) collapse_of[m] = i;

    std::vector<NodeId> super_ids(collapses_.size());
    std::set<NodeId> taken;
    for (std::size_t i = 0; i < collapses_.size(); ++i) {
      const auto& c = collapses_[i];
      NodeId id = "u_" + c.intent;
      auto clashes = [&](const NodeId& candidate) {
        if (taken.count(candidate)) return true;
        if (!task_ids.count(candidate)) return false;
        return !(c.members.size() == 1 && c.members.front() == candidate);
      };
      while (clashes(id)) id = "_" + id;
      taken.insert(id);
      super_ids[i] = id;
    }

    std::set<std::size_t> emitted;
    for (const auto& n : t_.graph.nodes) {
      auto it = collapse_of.find(n.id);
      if (it == collapse_of.end()) {
        view.collapse_map[n.id] = n.id;
        const NodeId& owner = t_.ownership.owner.at(n.id);
        view.nodes.push_back({n.id, n.label, n.detail, n.origin, owner, false, {}});
        if (focus_.count(owner)) view.highlight.insert(n.id);
        continue;
      }
      std::size_t ci = it->second;
      view.collapse_map[n.id] = super_ids[ci];
      if (!emitted.insert(ci).second) continue;
      const auto& c = collapses_[ci];
      ViewNode s;
      s.id = super_ids[ci];
      s.label = t_.intent_tree.node(c.intent).text;
      s.intent_id = c.intent;
      s.supernode = true;
      s.member_ids = c.members;
      view.nodes.push_back(std::move(s));
    }

    std::set<NodeId> super_set(super_ids.begin(), super_ids.end());
    std::map<std::pair<NodeId, NodeId>, std::size_t> merged;  // pair -> index in view.edges
    std::set<TaskEdge> plain;
    for (const auto& e : t_.graph.edges) {
      const NodeId& s = view.collapse_map.at(e.src);
      const NodeId& d = view.collapse_map.at(e.dst);
      if (s == d) continue;
      bool through_super = super_set.count(s) || super_set.count(d);
      if (!through_super) {
        TaskEdge copy{s, d, e.kind};
        if (plain.insert(copy).second) view.edges.push_back(copy);
        continue;
      }
      auto [pos, inserted] = merged.emplace(std::make_pair(s, d), view.edges.size());
      if (inserted)
        view.edges.push_back({s, d, e.kind});
      else if (view.edges[pos->second].kind != e.kind)
        view.edges[pos->second].kind = EdgeKind::Dependency;
    }
    return view;
  }

 private:
  bool subtree_has_focus(const NodeId& v) const {
    for (const auto& id : t_.intent_tree.preorder_from(v))
      if (focus_.count(id)) return true;
    return false;
  }

  void visit(const NodeId& v) {
    if (!subtree_has_focus(v)) {
      std::set<NodeId> subtree;
      for (const auto& id : t_.intent_tree.preorder_from(v)) subtree.insert(id);
      Collapse c{v, {}};
      for (const auto& n : t_.graph.nodes)
        if (subtree.count(t_.ownership.owner.at(n.id))) c.members.push_back(n.id);
      if (!c.members.empty()) collapses_.push_back(std::move(c));
      return;
    }
    for (const auto& child : t_.intent_tree.node(v).children) visit(child);
  }

  const Triple& t_;
  const FocusSet& focus_;
  std::vector<Collapse> collapses_;
};

}  // namespace

const ViewNode* SimplifiedView::find(const NodeId& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

std::vector<const ViewNode*> SimplifiedView::supernodes() const {
  std::vector<const ViewNode*> out;
  for (const auto& n : nodes)
    if (n.supernode) out.push_back(&n);
  return out;
}

SimplifiedView simplify(const Triple& triple, const FocusSet& focus) {
  return Simplifier(triple, focus).run();
}

std::vector<NodeId> expand_supernode(const SimplifiedView& view, const NodeId& supernode_id) {
  const ViewNode* n = view.find(supernode_id);
  if (!n || !n->supernode) fail(ErrorCode::NotASupernode, "'" + supernode_id + "' is not a supernode");
  return n->member_ids;
}

Triple view_as_triple(const SimplifiedView& view, const Triple& source) {
  UnderstandingGraph g;
  std::map<NodeId, std::vector<NodeId>> claims;
  std::vector<NodeId> intent_order;
  for (const auto& n : view.nodes) {
    g.nodes.push_back({n.id, n.label, n.detail, n.origin});
    if (!claims.count(n.intent_id)) intent_order.push_back(n.intent_id);
    claims[n.intent_id].push_back(n.id);
  }
  g.edges = view.edges;
  Mapping m;
  for (const auto& id : intent_order) m.entries.push_back({id, claims[id]});
  return make_triple(source.intent_tree, std::move(g), std::move(m), source.round);
}

json to_json(const SimplifiedView& view) {
  json nodes = json::array();
  for (const auto& n : view.nodes) {
    json j{{"id", n.id}, {"label", n.label}, {"intent_id", n.intent_id}};
    if (n.supernode) {
      j["member_ids"] = n.member_ids;
      j["member_count"] = n.member_count();
    } else {
      j["origin"] = to_string(n.origin);
      if (!n.detail.empty()) j["detail"] = n.detail;
    }
    nodes.push_back(std::move(j));
  }
  json edges = json::array();
  for (const auto& e : view.edges) edges.push_back(to_json(e));
  return {{"nodes", std::move(nodes)},
          {"edges", std::move(edges)},
          {"highlight", view.highlight},
          {"collapse_map", view.collapse_map},
          {"focus", view.focus}};
}

SimplifiedView simplified_view_from_json(const json& doc) {
  SimplifiedView v;
  try {
    for (const auto& j : doc.at("nodes")) {
      ViewNode n;
      n.id = j.at("id").get<std::string>();
      n.label = j.at("label").get<std::string>();
      n.intent_id = j.value("intent_id", "");
      if (j.contains("member_ids")) {
        n.supernode = true;
        n.member_ids = j.at("member_ids").get<std::vector<NodeId>>();
      } else {
        n.detail = j.value("detail", "");
        n.origin = parse_task_origin(j.value("origin", "EXTRACTED"));
      }
      v.nodes.push_back(std::move(n));
    }
    for (const auto& j : doc.at("edges")) v.edges.push_back(task_edge_from_json(j));
    v.highlight = doc.value("highlight", std::set<NodeId>{});
    v.collapse_map = doc.value("collapse_map", CollapseMap{});
    v.focus = doc.value("focus", FocusSet{});
  } catch (const json::exception& ex) {
    fail(ErrorCode::MalformedDocument, std::string("bad simplified view document: ") + ex.what());
  }
  return v;
}

}  // namespace taskalign
