#pragma once

// Interactive alignment sessions.
//
//   AWAITING_PROMPT --prompt--> GRAPH_REVIEW --edits|modify|focus--> GRAPH_REVIEW
//   GRAPH_REVIEW --confirm--> GENERATED --prompt--> GRAPH_REVIEW
//   GENERATED --confirm--> GENERATED (regenerate from the same conditioning)
//
// Every committed transition is an event. Events carry results, not requests,
// so replaying a log never calls a model. The same apply_event() drives the
// live path and recovery.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "taskalign/extractor.hpp"
#include "taskalign/gateway.hpp"
#include "taskalign/intent_tracker.hpp"
#include "taskalign/simplify.hpp"
#include "taskalign/templates.hpp"
#include "taskalign/triple.hpp"

namespace taskalign {

enum class SessionStatus { AwaitingPrompt, GraphReview, Generated };

std::string_view to_string(SessionStatus s);
SessionStatus parse_session_status(std::string_view s);

namespace edit {

/// Empty node.id asks for a generated id. Without intent_id the node is owned
/// by the single focused intent, or by the root when focus is not a singleton.
struct AddNode {
  TaskNode node;
  std::optional<NodeId> intent_id;
  bool operator==(const AddNode&) const = default;
};
struct DeleteNode {
  NodeId id;
  bool operator==(const DeleteNode&) const = default;
};
struct EditLabel {
  NodeId id;
  std::string label;
  std::optional<std::string> detail;
  bool operator==(const EditLabel&) const = default;
};
struct AddEdge {
  TaskEdge edge;
  bool operator==(const AddEdge&) const = default;
};
struct DeleteEdge {
  TaskEdge edge;
  bool operator==(const DeleteEdge&) const = default;
};

}  // namespace edit

using NodeEdit = std::variant<edit::AddNode, edit::DeleteNode, edit::EditLabel, edit::AddEdge, edit::DeleteEdge>;

json to_json(const NodeEdit& e);
NodeEdit node_edit_from_json(const json& doc);
/// {"edits": [...]} or a bare array.
std::vector<NodeEdit> node_edits_from_json(const json& doc);
bool is_structural(const NodeEdit& e);

struct SessionRound {
  std::int64_t round = 0;
  std::string prompt;
  ExtractionPath path = ExtractionPath::Student;
  std::vector<IntentUpdate> updates;
  bool tracker_fallback = false;  // proposal unparseable; NOOP applied instead
  std::optional<std::string> code;
  std::vector<ChatMessage> conditioning;  // messages of the latest confirm call

  bool operator==(const SessionRound&) const = default;
};

struct Session {
  std::string id;
  SessionStatus status = SessionStatus::AwaitingPrompt;
  std::vector<SessionRound> transcript;
  std::optional<Triple> current_triple;
  SimplifiedView current_view;
  FocusSet focus;
  /// Edits applied since the latest extraction, not yet confirmed.
  GraphDelta pending_edits;
  /// Graph as extracted at the start of the round; pending_edits is relative to it.
  UnderstandingGraph round_base;
  std::set<NodeId> retired_ids;
  std::int64_t next_user_node = 1;
  std::uint64_t seq = 0;  // committed events

  bool operator==(const Session& other) const;
};

json to_json(const Session& s);
Session session_from_json(const json& doc);

/// Applies one committed event. Pure: identical (session, event) pairs give
/// identical sessions.
void apply_event(Session& session, const json& event);

struct PromptResult {
  Triple triple;
  SimplifiedView view;
  GraphDelta delta;
  FocusSet focus;
  bool tracker_fallback = false;
};

struct EditResult {
  Triple triple;
  SimplifiedView view;
  bool view_recomputed = false;
};

struct ModifyResult {
  Triple triple;
  SimplifiedView view;
  GraphDelta delta;
};

struct ConfirmResult {
  std::string code;
  std::vector<ChatMessage> conditioning;
};

/// Append-only JSONL event log plus periodic snapshots for one directory of
/// sessions: <dir>/<id>/events.jsonl and <dir>/<id>/snapshot.json.
class SessionStore {
 public:
  SessionStore(std::filesystem::path directory, std::size_t snapshot_every = 8);

  /// Appends and fsyncs one event line; snapshots when seq % snapshot_every == 0.
  void append(const Session& after, const json& event);
  /// Snapshot (if any) plus the events after it. A torn final line is dropped
  /// and truncated away.
  Session load(const std::string& id) const;
  std::vector<std::string> list() const;
  const std::filesystem::path& directory() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::size_t snapshot_every_;
};

struct SessionOptions {
  /// Extraction path; defaults to STUDENT when a student endpoint is configured.
  std::optional<ExtractionPath> path;
  std::size_t snapshot_every = 8;
};

/// Called after each committed event with (session id, event document).
using SessionListener = std::function<void(const std::string&, const json&)>;

class SessionManager {
 public:
  SessionManager(Gateway& gateway, const TemplateStore& templates,
                 std::optional<std::filesystem::path> store_dir = std::nullopt, SessionOptions options = {});

  std::string create_session();
  PromptResult submit_prompt(const std::string& id, const std::string& prompt);
  EditResult apply_node_edits(const std::string& id, const std::vector<NodeEdit>& edits);
  ModifyResult modify_graph_nl(const std::string& id, const std::string& instruction);
  ConfirmResult confirm_graph(const std::string& id);
  SimplifiedView focus_intent(const std::string& id, const NodeId& intent_id);
  std::vector<NodeId> expand_supernode(const std::string& id, const NodeId& supernode_id);

  Session get(const std::string& id) const;
  std::vector<std::string> list() const;
  bool contains(const std::string& id) const;

  /// Returns a token for unsubscribe().
  std::size_t subscribe(SessionListener listener);
  void unsubscribe(std::size_t token);

  /// Invoked after each commit; lets tests stop a process between transitions.
  std::function<void(const Session&)> after_commit;

 private:
  struct Entry {
    std::mutex mutex;
    Session session;
  };
  std::shared_ptr<Entry> entry(const std::string& id) const;
  void commit(Entry& e, json event);
  ExtractionPath path() const;

  Gateway& gateway_;
  const TemplateStore& templates_;
  std::optional<SessionStore> store_;
  SessionOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_id_ = 1;
  std::mutex listeners_mutex_;
  std::map<std::size_t, SessionListener> listeners_;
  std::size_t next_token_ = 1;
};

}  // namespace taskalign
