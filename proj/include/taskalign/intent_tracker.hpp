#pragma once

// Intent tracking: a deterministic rewriting system over the intent tree.
// Each round applies an ordered list of typed updates; the ids they touch form
// the round's focus set, which drives graph simplification.

#include <set>
#include <string>
#include <variant>
#include <vector>

#include "taskalign/triple.hpp"

namespace taskalign {

class Gateway;
class TemplateStore;

enum class Provenance { LlmProposed, UserEdit };

namespace update {

struct Refine {
  NodeId id;
  std::string text;
  bool operator==(const Refine&) const = default;
};

/// `id` may be left empty; a fresh id is generated on application.
struct Add {
  NodeId parent_id;
  std::string text;
  NodeId id;
  IntentState state = IntentState::NotCompleted;
  bool operator==(const Add&) const = default;
};

struct Merge {
  NodeId id_a;
  NodeId id_b;
  std::string text;
  bool operator==(const Merge&) const = default;
};

struct Reparent {
  NodeId id;
  NodeId new_parent_id;
  bool operator==(const Reparent&) const = default;
};

struct MarkState {
  NodeId id;
  IntentState state = IntentState::NotCompleted;
  bool operator==(const MarkState&) const = default;
};

struct Noop {
  bool operator==(const Noop&) const = default;
};

}  // namespace update

using UpdateOp = std::variant<update::Refine, update::Add, update::Merge, update::Reparent,
                              update::MarkState, update::Noop>;

struct IntentUpdate {
  UpdateOp op;
  Provenance provenance = Provenance::LlmProposed;
  bool operator==(const IntentUpdate&) const = default;
};

using FocusSet = std::set<NodeId>;

/// A MERGE replaces two nodes with a freshly created one.
struct MergeRecord {
  NodeId id_a;
  NodeId id_b;
  NodeId merged;
  bool operator==(const MergeRecord&) const = default;
};

struct TrackingResult {
  IntentTree tree;
  FocusSet focus;
  std::vector<MergeRecord> merges;
  std::vector<NodeId> created;
};

/// Applies `updates` sequentially. The result's version is tree.version + 1.
/// Throws UnknownIntentId, CycleWouldForm or ConflictingUpdates; the input is
/// never modified.
TrackingResult apply_updates(const IntentTree& tree, const std::vector<IntentUpdate>& updates);

/// Moves the mapping claims of merged-away intents onto their merged node.
Mapping remap_merged(const Mapping& mapping, const std::vector<MergeRecord>& merges);

json to_json(const IntentUpdate& u);
IntentUpdate intent_update_from_json(const json& doc);
/// Update-list document: {"updates": [...]}. A bare array is also accepted.
json updates_to_json(const std::vector<IntentUpdate>& updates);
std::vector<IntentUpdate> updates_from_json(const json& doc);

/// Asks the conversational model for the updates implied by `prompt`. One
/// repair retry is made when the reply does not parse or does not apply to
/// `tree`; a second failure raises UnparseableProposal.
std::vector<IntentUpdate> propose_updates(const IntentTree& tree, const std::string& prompt,
                                          Gateway& gateway, const TemplateStore& templates);

}  // namespace taskalign
