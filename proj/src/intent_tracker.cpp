#include "taskalign/intent_tracker.hpp"

#include <algorithm>

#include "taskalign/errors.hpp"
#include "taskalign/gateway.hpp"
#include "taskalign/reply_parsing.hpp"
#include "taskalign/templates.hpp"

namespace taskalign {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

void replace_child(IntentTree& tree, const NodeId& old_id, const std::vector<NodeId>& replacement) {
  auto parent = tree.parent_of(old_id);
  if (!parent) return;
  auto& ch = tree.node(*parent).children;
  auto it = std::find(ch.begin(), ch.end(), old_id);
  it = ch.erase(it);
  ch.insert(it, replacement.begin(), replacement.end());
}

class Applier {
 public:
  explicit Applier(const IntentTree& input) {
    result_.tree = input;
    result_.tree.version = input.version + 1;
  }

  void apply(const IntentUpdate& u) {
    std::visit(overloaded{[&](const update::Refine& op) { refine(op); },
                          [&](const update::Add& op) { add(op); },
                          [&](const update::Merge& op) { merge(op); },
                          [&](const update::Reparent& op) { reparent(op); },
                          [&](const update::MarkState& op) { require(op.id); tree().node(op.id).state = op.state; },
                          [&](const update::Noop&) {}},
               u.op);
  }

  TrackingResult take() { return std::move(result_); }

 private:
  IntentTree& tree() { return result_.tree; }

  void require(const NodeId& id) {
    if (consumed_.count(id))
      fail(ErrorCode::ConflictingUpdates, "intent '" + id + "' was already merged away in this round");
    if (!tree().contains(id)) fail(ErrorCode::UnknownIntentId, "no intent node '" + id + "'");
  }

  NodeId fresh_id() {
    NodeId id;
    do {
      id = "i" + std::to_string(tree().version) + "_" + std::to_string(++generated_);
    } while (tree().contains(id) || consumed_.count(id));
    return id;
  }

  void refine(const update::Refine& op) {
    require(op.id);
    if (blank(op.text)) fail(ErrorCode::MalformedDocument, "REFINE of '" + op.id + "' has empty text");
    tree().node(op.id).text = op.text;
    result_.focus.insert(op.id);
  }

  void add(const update::Add& op) {
    require(op.parent_id);
    if (blank(op.text)) fail(ErrorCode::MalformedDocument, "ADD under '" + op.parent_id + "' has empty text");
    NodeId id = op.id.empty() ? fresh_id() : op.id;
    if (tree().contains(id) || consumed_.count(id))
      fail(ErrorCode::DuplicateId, "ADD would reuse intent id '" + id + "'");
    tree().nodes.emplace(id, IntentNode{id, op.text, op.state, {}});
    tree().node(op.parent_id).children.push_back(id);
    result_.focus.insert(id);
    result_.created.push_back(id);
  }

  void merge(const update::Merge& op) {
    require(op.id_a);
    require(op.id_b);
    if (op.id_a == op.id_b) fail(ErrorCode::ConflictingUpdates, "MERGE targets must be distinct");
    auto& t = tree();
    NodeId anc = op.id_a, other = op.id_b;
    bool nested = true;
    if (t.is_ancestor(op.id_b, op.id_a)) {
      std::swap(anc, other);
    } else if (!t.is_ancestor(op.id_a, op.id_b)) {
      nested = false;
    }
    const IntentNode a = t.node(anc);
    const IntentNode b = t.node(other);

    IntentNode merged;
    merged.id = fresh_id();
    merged.text = blank(op.text) ? t.node(op.id_a).text : op.text;
    merged.state = a.state == IntentState::Completed && b.state == IntentState::Completed
                       ? IntentState::Completed
                       : IntentState::NotCompleted;
    if (nested) {
      // `other` sits inside anc's subtree: splice its children into its slot.
      replace_child(t, other, b.children);
      merged.children = t.node(anc).children;
    } else {
      replace_child(t, other, {});
      merged.children = a.children;
      merged.children.insert(merged.children.end(), b.children.begin(), b.children.end());
    }
    if (t.root == anc)
      t.root = merged.id;
    else
      replace_child(t, anc, {merged.id});
    t.nodes.erase(anc);
    t.nodes.erase(other);
    NodeId merged_id = merged.id;
    t.nodes.emplace(merged_id, std::move(merged));

    consumed_.insert(op.id_a);
    consumed_.insert(op.id_b);
    result_.focus.erase(op.id_a);
    result_.focus.erase(op.id_b);
    result_.focus.insert(merged_id);
    std::erase_if(result_.created, [&](const NodeId& id) { return id == op.id_a || id == op.id_b; });
    result_.merges.push_back({op.id_a, op.id_b, merged_id});
  }

  void reparent(const update::Reparent& op) {
    require(op.id);
    require(op.new_parent_id);
    auto& t = tree();
    if (op.id == t.root) fail(ErrorCode::CycleWouldForm, "the root cannot be reparented");
    if (t.is_ancestor(op.id, op.new_parent_id))
      fail(ErrorCode::CycleWouldForm,
           "moving '" + op.id + "' under '" + op.new_parent_id + "' would create a cycle");
    replace_child(t, op.id, {});
    t.node(op.new_parent_id).children.push_back(op.id);
    result_.focus.insert(op.id);
  }

  TrackingResult result_;
  std::set<NodeId> consumed_;
  int generated_ = 0;
};

std::string provenance_name(Provenance p) { return p == Provenance::UserEdit ? "USER_EDIT" : "LLM_PROPOSED"; }

std::string str_field(const json& doc, const char* key, bool required = true) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) {
    if (required) fail(ErrorCode::MalformedDocument, std::string("update is missing '") + key + "'");
    return {};
  }
  if (!it->is_string()) fail(ErrorCode::MalformedDocument, std::string("update field '") + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

TrackingResult apply_updates(const IntentTree& tree, const std::vector<IntentUpdate>& updates) {
  Applier applier(tree);
  for (const auto& u : updates) applier.apply(u);
  TrackingResult result = applier.take();
  validate_intent_tree(result.tree);
  return result;
}

Mapping remap_merged(const Mapping& mapping, const std::vector<MergeRecord>& merges) {
  Mapping out = mapping;
  for (const auto& m : merges) {
    std::vector<NodeId> claims;
    auto take = [&](const NodeId& id) {
      auto it = std::find_if(out.entries.begin(), out.entries.end(),
                             [&](const MappingEntry& e) { return e.intent_id == id; });
      if (it == out.entries.end()) return;
      for (const auto& t : it->task_node_ids)
        if (std::find(claims.begin(), claims.end(), t) == claims.end()) claims.push_back(t);
      out.entries.erase(it);
    };
    take(m.id_a);
    take(m.id_b);
    if (claims.empty()) continue;
    auto it = std::find_if(out.entries.begin(), out.entries.end(),
                           [&](const MappingEntry& e) { return e.intent_id == m.merged; });
    if (it == out.entries.end()) {
      out.entries.push_back({m.merged, std::move(claims)});
    } else {
      for (auto& t : claims)
        if (std::find(it->task_node_ids.begin(), it->task_node_ids.end(), t) == it->task_node_ids.end())
          it->task_node_ids.push_back(t);
    }
  }
  return out;
}

json to_json(const IntentUpdate& u) {
  json j = std::visit(
      overloaded{[](const update::Refine& op) -> json {
                   return {{"op", "REFINE"}, {"id", op.id}, {"new_text", op.text}};
                 },
                 [](const update::Add& op) -> json {
                   json node{{"text", op.text}, {"state", to_string(op.state)}};
                   if (!op.id.empty()) node["id"] = op.id;
                   return {{"op", "ADD"}, {"parent_id", op.parent_id}, {"new_node", node}};
                 },
                 [](const update::Merge& op) -> json {
                   return {{"op", "MERGE"}, {"id_a", op.id_a}, {"id_b", op.id_b}, {"merged_text", op.text}};
                 },
                 [](const update::Reparent& op) -> json {
                   return {{"op", "REPARENT"}, {"id", op.id}, {"new_parent_id", op.new_parent_id}};
                 },
                 [](const update::MarkState& op) -> json {
                   return {{"op", "MARK_STATE"}, {"id", op.id}, {"state", to_string(op.state)}};
                 },
                 [](const update::Noop&) -> json { return {{"op", "NOOP"}}; }},
      u.op);
  j["provenance"] = provenance_name(u.provenance);
  return j;
}

IntentUpdate intent_update_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::MalformedDocument, "update must be an object");
  IntentUpdate u;
  if (auto p = str_field(doc, "provenance", false); !p.empty()) {
    if (p == "USER_EDIT")
      u.provenance = Provenance::UserEdit;
    else if (p == "LLM_PROPOSED")
      u.provenance = Provenance::LlmProposed;
    else
      fail(ErrorCode::MalformedDocument, "unknown provenance '" + p + "'");
  }
  std::string op = str_field(doc, "op");
  if (op == "REFINE") {
    u.op = update::Refine{str_field(doc, "id"), str_field(doc, "new_text")};
  } else if (op == "ADD") {
    update::Add add;
    add.parent_id = str_field(doc, "parent_id");
    auto node = doc.find("new_node");
    if (node == doc.end() || !node->is_object()) fail(ErrorCode::MalformedDocument, "ADD needs a new_node object");
    add.text = str_field(*node, "text");
    add.id = str_field(*node, "id", false);
    if (auto s = str_field(*node, "state", false); !s.empty()) add.state = parse_intent_state(s);
    u.op = add;
  } else if (op == "MERGE") {
    u.op = update::Merge{str_field(doc, "id_a"), str_field(doc, "id_b"), str_field(doc, "merged_text")};
  } else if (op == "REPARENT") {
    u.op = update::Reparent{str_field(doc, "id"), str_field(doc, "new_parent_id")};
  } else if (op == "MARK_STATE") {
    u.op = update::MarkState{str_field(doc, "id"), parse_intent_state(str_field(doc, "state"))};
  } else if (op == "NOOP") {
    u.op = update::Noop{};
  } else {
    fail(ErrorCode::MalformedDocument, "unknown update op '" + op + "'");
  }
  return u;
}

json updates_to_json(const std::vector<IntentUpdate>& updates) {
  json list = json::array();
  for (const auto& u : updates) list.push_back(to_json(u));
  return {{"updates", std::move(list)}};
}

std::vector<IntentUpdate> updates_from_json(const json& doc) {
  const json* list = &doc;
  if (doc.is_object()) {
    auto it = doc.find("updates");
    if (it == doc.end()) fail(ErrorCode::MalformedDocument, "update list document needs 'updates'");
    list = &*it;
  }
  if (!list->is_array()) fail(ErrorCode::MalformedDocument, "'updates' must be an array");
  std::vector<IntentUpdate> out;
  for (const auto& j : *list) out.push_back(intent_update_from_json(j));
  return out;
}

std::vector<IntentUpdate> propose_updates(const IntentTree& tree, const std::string& prompt,
                                          Gateway& gateway, const TemplateStore& templates) {
  ChatRequest request;
  request.role = ModelRole::Conversational;
  request.purpose = "intent_updates";
  request.context = {{"tree", to_json(tree)}, {"prompt", prompt}};
  request.messages = templates.render("intent_updates", {{"tree", to_json(tree).dump(2)}, {"prompt", prompt}});

  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatExchange ex = gateway.complete(request);
    try {
      auto doc = parse_json_reply(ex.response);
      if (!doc) fail(ErrorCode::MalformedDocument, "reply contains no JSON document");
      auto updates = updates_from_json(*doc);
      apply_updates(tree, updates);  // dry run against the current tree
      return updates;
    } catch (const Error& err) {
      last_error = err.what();
    }
    request.messages.push_back({"assistant", ex.response});
    auto repair = templates.render("repair", {{"error", last_error}});
    request.messages.insert(request.messages.end(), repair.begin(), repair.end());
    request.context["repair_error"] = last_error;
  }
  fail(ErrorCode::UnparseableProposal, last_error);
}

}  // namespace taskalign
