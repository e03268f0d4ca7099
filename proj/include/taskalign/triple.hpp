#pragma once

// Triple model: intent tree + understanding graph + mapping, their canonical
// JSON document form, validation and id-matched graph diffs.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace taskalign {

using json = nlohmann::json;
using NodeId = std::string;

enum class IntentState { NotCompleted, Completed };
enum class TaskOrigin { Extracted, UserAdded, NlModified };
enum class EdgeKind { Dependency, DataFlow };

std::string_view to_string(IntentState s);
std::string_view to_string(TaskOrigin o);
std::string_view to_string(EdgeKind k);
IntentState parse_intent_state(std::string_view s);
TaskOrigin parse_task_origin(std::string_view s);
EdgeKind parse_edge_kind(std::string_view s);

struct IntentNode {
  NodeId id;
  std::string text;
  IntentState state = IntentState::NotCompleted;
  std::vector<NodeId> children;

  bool operator==(const IntentNode&) const = default;
};

struct IntentTree {
  NodeId root;
  std::map<NodeId, IntentNode> nodes;
  std::int64_t version = 0;

  bool contains(const NodeId& id) const { return nodes.count(id) != 0; }
  const IntentNode& node(const NodeId& id) const;
  IntentNode& node(const NodeId& id);

  /// Root-first, child-order traversal.
  std::vector<NodeId> preorder() const;
  std::vector<NodeId> preorder_from(const NodeId& id) const;
  std::optional<NodeId> parent_of(const NodeId& id) const;
  std::map<NodeId, NodeId> parent_map() const;
  std::vector<NodeId> leaves() const;
  /// True when `ancestor` lies on the path from the root to `node` (a node is
  /// its own ancestor).
  bool is_ancestor(const NodeId& ancestor, const NodeId& node) const;

  bool operator==(const IntentTree&) const = default;
};

struct TaskNode {
  NodeId id;
  std::string label;
  std::string detail;
  TaskOrigin origin = TaskOrigin::Extracted;

  bool operator==(const TaskNode&) const = default;
  auto operator<=>(const TaskNode&) const = default;
};

struct TaskEdge {
  NodeId src;
  NodeId dst;
  EdgeKind kind = EdgeKind::Dependency;

  bool operator==(const TaskEdge&) const = default;
  auto operator<=>(const TaskEdge&) const = default;
};

struct UnderstandingGraph {
  std::vector<TaskNode> nodes;
  std::vector<TaskEdge> edges;

  const TaskNode* find(const NodeId& id) const;
  TaskNode* find(const NodeId& id);
  bool contains(const NodeId& id) const { return find(id) != nullptr; }
  bool has_edge(const TaskEdge& e) const;
  std::vector<NodeId> node_ids() const;
  bool has_cycle() const;

  /// Order-insensitive: two graphs are equal when they hold the same nodes
  /// and the same edge set.
  bool operator==(const UnderstandingGraph& other) const;
};

struct MappingEntry {
  NodeId intent_id;
  std::vector<NodeId> task_node_ids;

  bool operator==(const MappingEntry&) const = default;
};

struct Mapping {
  std::vector<MappingEntry> entries;

  const MappingEntry* find(const NodeId& intent_id) const;
  bool operator==(const Mapping& other) const;
};

/// Resolved owner of every task node. A node claimed by several intents is
/// owned by the first claimant in preorder; later claimants are recorded in
/// `referenced_by`. Unmapped nodes are owned by the root.
struct Ownership {
  std::map<NodeId, NodeId> owner;
  std::map<NodeId, std::vector<NodeId>> referenced_by;

  std::vector<NodeId> owned_by(const NodeId& intent_id) const;
  bool operator==(const Ownership&) const = default;
};

struct Triple {
  IntentTree intent_tree;
  UnderstandingGraph graph;
  Mapping mapping;
  std::int64_t round = 0;
  Ownership ownership;  // derived; not serialized

  bool operator==(const Triple& other) const {
    return intent_tree == other.intent_tree && graph == other.graph &&
           mapping == other.mapping && round == other.round;
  }
};

Ownership resolve_ownership(const IntentTree& tree, const UnderstandingGraph& graph,
                            const Mapping& mapping);

/// Checks every cross-structure invariant and resolves ownership. Empty
/// mapping entries are dropped. Throws Error on violation.
Triple make_triple(IntentTree tree, UnderstandingGraph graph, Mapping mapping,
                   std::int64_t round);

/// Parses the canonical document form into a validated Triple.
Triple validate_triple(const json& doc);
Triple parse_triple(std::string_view text);

json to_json(const IntentTree& tree);
json to_json(const UnderstandingGraph& graph);
json to_json(const Mapping& mapping);
json to_json(const Triple& triple);
json to_json(const TaskNode& node);
json to_json(const TaskEdge& edge);

IntentTree intent_tree_from_json(const json& doc);
UnderstandingGraph graph_from_json(const json& doc);
Mapping mapping_from_json(const json& doc);
TaskNode task_node_from_json(const json& doc);
TaskEdge task_edge_from_json(const json& doc);

/// Validates an intent tree on its own (tree shape, ids, texts).
void validate_intent_tree(const IntentTree& tree);
void validate_graph(const UnderstandingGraph& graph);

/// Canonical text: sorted keys, two-space indentation.
std::string to_document(const Triple& triple);
std::string to_document(const json& doc);

struct GraphDelta {
  std::vector<TaskNode> added_nodes;
  std::vector<NodeId> removed_nodes;
  std::vector<TaskNode> relabelled_nodes;  // new content for id-matched nodes
  std::vector<TaskEdge> added_edges;
  std::vector<TaskEdge> removed_edges;

  bool empty() const;
  /// Ids of nodes that were added or whose content changed.
  std::set<NodeId> touched_nodes() const;
  bool structural() const {
    return !added_nodes.empty() || !removed_nodes.empty() || !added_edges.empty() ||
           !removed_edges.empty();
  }
  bool operator==(const GraphDelta&) const = default;
};

GraphDelta diff_graphs(const UnderstandingGraph& before, const UnderstandingGraph& after);
UnderstandingGraph apply_delta(const UnderstandingGraph& before, const GraphDelta& delta);
json to_json(const GraphDelta& delta);
GraphDelta graph_delta_from_json(const json& doc);

}  // namespace taskalign
