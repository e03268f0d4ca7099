#include "taskalign/extractor.hpp"

#include <algorithm>
#include <cctype>

#include "taskalign/errors.hpp"
#include "taskalign/reply_parsing.hpp"

namespace taskalign {

namespace {

std::string normalize(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(first, last - first + 1));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Greedy one-to-one matching of new ids onto vanished ids.
std::map<NodeId, NodeId> match_ids(const std::vector<std::pair<NodeId, std::string>>& fresh,
                                   const std::vector<std::pair<NodeId, std::string>>& vanished,
                                   double threshold) {
  std::map<NodeId, NodeId> renames;
  std::set<NodeId> used;
  for (const auto& [id, text] : fresh) {
    double best = threshold;
    const NodeId* pick = nullptr;
    for (const auto& [old_id, old_text] : vanished) {
      if (used.count(old_id)) continue;
      double s = edit_similarity(text, old_text);
      if (s >= best && (!pick || s > best)) {
        best = s;
        pick = &old_id;
      }
    }
    if (pick) {
      renames[id] = *pick;
      used.insert(*pick);
    }
  }
  return renames;
}

std::string prev_text(const std::optional<Triple>& prev) { return prev ? to_document(*prev) : "null"; }

StageTiming timing_of(const std::string& stage, const ChatExchange& ex) {
  return {stage, ex.latency_ms, ex.usage.prompt_tokens, ex.usage.completion_tokens};
}

}  // namespace

std::string_view to_string(ExtractionPath path) {
  return path == ExtractionPath::Teacher ? "TEACHER" : "STUDENT";
}

double ExtractionTimings::total_ms() const {
  double total = 0;
  for (const auto& s : stages) total += s.latency_ms;
  return total;
}

std::int64_t count_triple_tokens(const Triple& triple) {
  return count_whitespace_tokens(to_document(triple));
}

double edit_similarity(std::string_view a, std::string_view b) {
  auto na = normalize(a), nb = normalize(b);
  std::size_t longest = std::max(na.size(), nb.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(na, nb)) / static_cast<double>(longest);
}

Triple reconcile_ids(const Triple& next, const Triple& prev, double threshold) {
  std::vector<std::pair<NodeId, std::string>> fresh, vanished;
  for (const auto& n : next.graph.nodes)
    if (!prev.graph.contains(n.id)) fresh.emplace_back(n.id, n.label);
  for (const auto& n : prev.graph.nodes)
    if (!next.graph.contains(n.id)) vanished.emplace_back(n.id, n.label);
  auto task_renames = match_ids(fresh, vanished, threshold);

  fresh.clear();
  vanished.clear();
  for (const auto& id : next.intent_tree.preorder())
    if (!prev.intent_tree.contains(id)) fresh.emplace_back(id, next.intent_tree.node(id).text);
  for (const auto& id : prev.intent_tree.preorder())
    if (!next.intent_tree.contains(id)) vanished.emplace_back(id, prev.intent_tree.node(id).text);
  auto intent_renames = match_ids(fresh, vanished, threshold);

  if (task_renames.empty() && intent_renames.empty()) return next;
  auto task = [&](const NodeId& id) {
    auto it = task_renames.find(id);
    return it == task_renames.end() ? id : it->second;
  };
  auto intent = [&](const NodeId& id) {
    auto it = intent_renames.find(id);
    return it == intent_renames.end() ? id : it->second;
  };

  UnderstandingGraph g = next.graph;
  for (auto& n : g.nodes) n.id = task(n.id);
  for (auto& e : g.edges) {
    e.src = task(e.src);
    e.dst = task(e.dst);
  }
  IntentTree tree;
  tree.root = intent(next.intent_tree.root);
  tree.version = next.intent_tree.version;
  for (const auto& [id, n] : next.intent_tree.nodes) {
    IntentNode copy = n;
    copy.id = intent(id);
    for (auto& c : copy.children) c = intent(c);
    tree.nodes.emplace(copy.id, std::move(copy));
  }
  Mapping m = next.mapping;
  for (auto& e : m.entries) {
    e.intent_id = intent(e.intent_id);
    for (auto& t : e.task_node_ids) t = task(t);
  }
  return make_triple(std::move(tree), std::move(g), std::move(m), next.round);
}

Extractor::Extractor(Gateway& gateway, const TemplateStore& templates, double reconcile_threshold)
    : gateway_(gateway), templates_(templates), threshold_(reconcile_threshold) {}

TripleReply Extractor::request_triple(ChatRequest request, std::int64_t round,
                                      const Triple* reconcile_against, const std::string& stage) {
  TripleReply reply;
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatExchange ex = gateway_.complete(request);
    reply.stages.push_back(timing_of(attempt == 0 ? stage : stage + "_repair", ex));
    try {
      auto doc = parse_json_reply(ex.response);
      if (!doc || !doc->is_object()) fail(ErrorCode::MalformedDocument, "reply contains no JSON object");
      (*doc)["round"] = round;
      if (auto it = doc->find("intent_tree"); it != doc->end() && it->is_object()) (*it)["version"] = round;
      Triple t = validate_triple(*doc);
      if (reconcile_against) t = reconcile_ids(t, *reconcile_against, threshold_);
      reply.triple = std::move(t);
      reply.repair_retries = attempt;
      return reply;
    } catch (const Error& err) {
      last_error = err.what();
    }
    request.messages.push_back({"assistant", ex.response});
    auto repair = templates_.render("repair", {{"error", last_error}});
    request.messages.insert(request.messages.end(), repair.begin(), repair.end());
    request.context["repair_error"] = last_error;
  }
  fail(ErrorCode::InvalidTripleOutput, last_error);
}

ExtractionRecord Extractor::extract_teacher(const std::string& prompt, const std::optional<Triple>& prev) {
  ChatRequest code_request;
  code_request.role = ModelRole::Conversational;
  code_request.purpose = "teacher_code";
  code_request.context = {{"prompt", prompt}};
  code_request.messages = templates_.render("teacher_code", {{"prompt", prompt}});
  ChatExchange code = gateway_.complete(code_request);
  return extract_teacher_from_code(prompt, code, prev);
}

ExtractionRecord Extractor::extract_teacher_from_code(const std::string& prompt, const ChatExchange& code,
                                                      const std::optional<Triple>& prev) {
  std::int64_t round = prev ? prev->round + 1 : 1;
  ChatRequest request;
  request.role = ModelRole::Extractor;
  request.purpose = "teacher_extract";
  request.context = {{"prompt", prompt},
                     {"code", code.response},
                     {"prev_triple", prev ? to_json(*prev) : json(nullptr)},
                     {"round", round}};
  request.messages = templates_.render(
      "teacher_extract",
      {{"prompt", prompt}, {"code", code.response}, {"prev_triple", prev_text(prev)}, {"round", std::to_string(round)}});

  auto reply = request_triple(std::move(request), round, prev ? &*prev : nullptr, "extract");

  ExtractionRecord rec;
  rec.prompt = prompt;
  rec.prev_triple = prev;
  rec.intermediate_code = code.response;
  rec.path = ExtractionPath::Teacher;
  rec.timings.stages.push_back(timing_of("code", code));
  rec.timings.stages.insert(rec.timings.stages.end(), reply.stages.begin(), reply.stages.end());
  rec.timings.valid_tokens = count_triple_tokens(reply.triple);
  rec.timings.overhead_tokens = code.usage.completion_tokens;
  rec.repair_retries = reply.repair_retries;
  rec.triple = std::move(reply.triple);
  return rec;
}

ExtractionRecord Extractor::extract_student(const std::string& prompt, const std::optional<Triple>& prev) {
  std::int64_t round = prev ? prev->round + 1 : 1;
  ChatRequest request;
  request.role = ModelRole::Student;
  request.purpose = "student_extract";
  request.context = {{"prompt", prompt}, {"prev_triple", prev ? to_json(*prev) : json(nullptr)}, {"round", round}};
  request.messages = templates_.render(
      "student_extract", {{"prompt", prompt}, {"prev_triple", prev_text(prev)}, {"round", std::to_string(round)}});

  auto reply = request_triple(std::move(request), round, prev ? &*prev : nullptr, "extract");

  ExtractionRecord rec;
  rec.prompt = prompt;
  rec.prev_triple = prev;
  rec.path = ExtractionPath::Student;
  rec.timings.stages = reply.stages;
  rec.timings.valid_tokens = count_triple_tokens(reply.triple);
  rec.repair_retries = reply.repair_retries;
  rec.triple = std::move(reply.triple);
  return rec;
}

TripleReply Extractor::modify(const Triple& current, const std::string& instruction) {
  ChatRequest request;
  request.role = ModelRole::Extractor;
  request.purpose = "modify_graph";
  request.context = {{"instruction", instruction}, {"triple", to_json(current)}};
  request.messages =
      templates_.render("modify_graph", {{"instruction", instruction}, {"triple", to_document(current)}});
  return request_triple(std::move(request), current.round, &current, "modify");
}

std::string emit_distillation_pair(const ExtractionRecord& record) {
  if (record.path != ExtractionPath::Teacher)
    fail(ErrorCode::PreconditionFailed, "distillation pairs are emitted from teacher records only");
  json line{{"input", {{"prompt", record.prompt},
                       {"prev_triple", record.prev_triple ? json(to_document(*record.prev_triple)) : json(nullptr)}}},
            {"target", to_document(record.triple)},
            {"round", record.triple.round}};
  return line.dump();
}

}  // namespace taskalign
