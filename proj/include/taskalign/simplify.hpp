#pragma once

// Intent-aware graph simplification.
//
// Starting at the root's children, every intent node whose subtree holds no
// focus member has the task nodes owned by that subtree collapsed into one
// supernode; intent nodes whose subtree does hold focus keep their own task
// nodes and the test repeats on their children. Root-owned task nodes are
// never collapsed. Edges are rebuilt through the collapse map with self-loops
// dropped and parallel edges merged.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "taskalign/intent_tracker.hpp"
#include "taskalign/triple.hpp"

namespace taskalign {

struct ViewNode {
  NodeId id;
  std::string label;
  std::string detail;
  TaskOrigin origin = TaskOrigin::Extracted;
  NodeId intent_id;  // owning intent (for supernodes: the collapsed subtree's root)
  bool supernode = false;
  std::vector<NodeId> member_ids;  // supernodes only

  std::size_t member_count() const { return member_ids.size(); }
  bool operator==(const ViewNode&) const = default;
};

/// Collapse map: task-node id -> view-node id. Identity on retained nodes.
using CollapseMap = std::map<NodeId, NodeId>;

struct SimplifiedView {
  std::vector<ViewNode> nodes;
  std::vector<TaskEdge> edges;
  std::set<NodeId> highlight;
  CollapseMap collapse_map;
  FocusSet focus;

  const ViewNode* find(const NodeId& id) const;
  std::vector<const ViewNode*> supernodes() const;
  bool operator==(const SimplifiedView&) const = default;
};

/// Throws InvalidFocus when a focus id is not an intent node.
SimplifiedView simplify(const Triple& triple, const FocusSet& focus);

/// Member task ids of a supernode. Throws NotASupernode otherwise.
std::vector<NodeId> expand_supernode(const SimplifiedView& view, const NodeId& supernode_id);

/// Re-expresses a view as a triple over the same intent tree: supernodes become
/// ordinary task nodes owned by their intent.
Triple view_as_triple(const SimplifiedView& view, const Triple& source);

json to_json(const SimplifiedView& view);
SimplifiedView simplified_view_from_json(const json& doc);

}  // namespace taskalign
