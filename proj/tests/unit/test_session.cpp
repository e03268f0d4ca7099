#include <doctest.h>

#include <fstream>

#include "check.hpp"
#include "fixtures.hpp"
#include "session_driver.hpp"
#include "taskalign/mock_responder.hpp"
#include "taskalign/session.hpp"

using namespace taskalign;

namespace {

const char* const kPrompt1 = "scrape web articles, extract the text and download the images";
const char* const kModify = "also save the articles to a local folder";
const char* const kPrompt2 = "also translate the text into english";

struct Rig {
  std::shared_ptr<MockChatBackend> backend = make_synthetic_backend();
  Gateway gw = make_mock_gateway(backend);
  SessionManager manager;
  std::string id;

  explicit Rig(std::optional<std::filesystem::path> dir = std::nullopt, std::size_t snapshot_every = 8)
      : manager(gw, fixture::templates(), dir, SessionOptions{std::nullopt, snapshot_every}) {
    id = manager.create_session();
  }

  Session state() const { return manager.get(id); }

  // Makes the next student extraction return `t` as round 1.
  void script_triple(Triple t) {
    t.round = 1;
    t.intent_tree.version = 1;
    backend->script("student_extract", {MockReply::text(to_document(t))});
  }
};

std::vector<NodeEdit> walkthrough_edits() {
  return {edit::DeleteNode{"t1_3"},
          edit::AddNode{{"", "download media files", "", TaskOrigin::UserAdded}, NodeId("i3")},
          edit::AddEdge{{"t1_2", "u1", EdgeKind::DataFlow}}, edit::AddEdge{{"t1_1", "u1", EdgeKind::Dependency}}};
}

std::set<NodeId> node_set(const UnderstandingGraph& g) {
  auto ids = g.node_ids();
  return {ids.begin(), ids.end()};
}

std::set<NodeId> view_ids(const SimplifiedView& v) {
  std::set<NodeId> out;
  for (const auto& n : v.nodes) out.insert(n.id);
  return out;
}

void check_consistent(const Session& s) {
  if (!s.current_triple) return;
  CHECK(s.current_view == simplify(*s.current_triple, s.focus));
  CHECK(validate_triple(to_json(*s.current_triple)) == *s.current_triple);
}

}  // namespace

TEST_SUITE("session") {
  TEST_CASE("first prompt yields a round-one triple with everything highlighted") {
    Rig rig;
    CHECK(rig.state().status == SessionStatus::AwaitingPrompt);
    auto r = rig.manager.submit_prompt(rig.id, kPrompt1);
    CHECK(r.triple.round == 1);
    CHECK(node_set(r.triple.graph) == std::set<NodeId>{"t1_1", "t1_2", "t1_3"});
    CHECK(r.triple.intent_tree.node("i0").children == std::vector<NodeId>{"i1", "i2", "i3"});
    CHECK(r.triple.graph.has_edge({"t1_1", "t1_2", EdgeKind::DataFlow}));
    CHECK(r.triple.graph.has_edge({"t1_2", "t1_3", EdgeKind::DataFlow}));
    CHECK(r.delta.added_nodes.size() == 3);
    CHECK(r.delta.added_edges.size() == 2);
    CHECK(r.focus == FocusSet{"i0", "i1", "i2", "i3"});
    CHECK(r.view.highlight == std::set<NodeId>{"t1_1", "t1_2", "t1_3"});
    CHECK(rig.state().status == SessionStatus::GraphReview);
    check_consistent(rig.state());
  }

  TEST_CASE("walkthrough edits apply as one transaction") {
    Rig rig;
    rig.manager.submit_prompt(rig.id, kPrompt1);
    auto r = rig.manager.apply_node_edits(rig.id, walkthrough_edits());
    CHECK(r.view_recomputed);
    CHECK(node_set(r.triple.graph) == std::set<NodeId>{"t1_1", "t1_2", "u1"});
    CHECK(r.triple.graph.edges.size() == 3);
    CHECK(r.triple.graph.has_edge({"t1_1", "t1_2", EdgeKind::DataFlow}));
    CHECK(r.triple.graph.has_edge({"t1_2", "u1", EdgeKind::DataFlow}));
    CHECK(r.triple.graph.has_edge({"t1_1", "u1", EdgeKind::Dependency}));
    CHECK(r.triple.ownership.owner.at("u1") == "i3");
    CHECK(r.triple.graph.find("u1")->origin == TaskOrigin::UserAdded);
    auto s = rig.state();
    CHECK(s.pending_edits.added_nodes.size() == 1);
    CHECK(s.pending_edits.removed_nodes == std::vector<NodeId>{"t1_3"});
    CHECK(s.retired_ids.count("t1_3"));
    check_consistent(s);
  }

  TEST_CASE("user-added node ownership follows the focus") {
    Rig rig;
    rig.manager.submit_prompt(rig.id, kPrompt1);
    auto r = rig.manager.apply_node_edits(rig.id, {edit::AddNode{{"", "extra", "", {}}, {}}});
    CHECK(r.triple.ownership.owner.at("u1") == "i0");
    rig.manager.focus_intent(rig.id, "i2");
    r = rig.manager.apply_node_edits(rig.id, {edit::AddNode{{"", "more", "", {}}, {}}});
    CHECK(r.triple.ownership.owner.at("u2") == "i2");
    rig.manager.apply_node_edits(rig.id, {edit::DeleteNode{"u2"}});
    r = rig.manager.apply_node_edits(rig.id, {edit::AddNode{{"", "again", "", {}}, {}}});
    CHECK(r.triple.graph.contains("u3"));
    CHECK_FALSE(r.triple.graph.contains("u2"));
  }

  TEST_CASE("label-only edits keep the view") {
    Rig rig;
    rig.manager.submit_prompt(rig.id, kPrompt1);
    rig.manager.focus_intent(rig.id, "i1");
    auto before = rig.state();
    auto r = rig.manager.apply_node_edits(rig.id, {edit::EditLabel{"t1_2", "pull out body text", {}}});
    CHECK_FALSE(r.view_recomputed);
    CHECK(r.triple.graph.find("t1_2")->label == "pull out body text");
    CHECK(view_ids(r.view) == view_ids(before.current_view));
    CHECK(r.view.edges == before.current_view.edges);
    check_consistent(rig.state());
  }

  TEST_CASE("invalid edits leave the triple untouched") {
    Rig rig;
    rig.manager.submit_prompt(rig.id, kPrompt1);
    auto before = rig.state();
    CHECK_ERROR(rig.manager.apply_node_edits(rig.id, {edit::DeleteNode{"t1_1"}, edit::AddEdge{{"t1_2", "zz", EdgeKind::DataFlow}}}),
                ErrorCode::InvalidEdit);
    CHECK_ERROR(rig.manager.apply_node_edits(rig.id, {edit::AddEdge{{"t1_1", "t1_1", EdgeKind::DataFlow}}}),
                ErrorCode::InvalidEdit);
    CHECK_ERROR(rig.manager.apply_node_edits(rig.id, {edit::AddEdge{{"t1_1", "t1_2", EdgeKind::DataFlow}}}),
                ErrorCode::InvalidEdit);
    CHECK_ERROR(rig.manager.apply_node_edits(rig.id, {edit::DeleteEdge{{"t1_2", "t1_1", EdgeKind::DataFlow}}}),
                ErrorCode::InvalidEdit);
    CHECK_ERROR(rig.manager.apply_node_edits(rig.id, {edit::EditLabel{"t1_1", " ", {}}}), ErrorCode::InvalidEdit);
    CHECK_ERROR(rig.manager.apply_node_edits(rig.id, {}), ErrorCode::InvalidEdit);
    CHECK(rig.state() == before);
  }

  TEST_CASE("edits round-trip through JSON") {
    for (const auto& e : walkthrough_edits()) CHECK(node_edit_from_json(to_json(e)) == e);
    json doc = {{"edits", json::array({to_json(walkthrough_edits()[0])})}};
    CHECK(node_edits_from_json(doc).size() == 1);
    CHECK(node_edits_from_json(doc["edits"]).size() == 1);
    CHECK_ERROR(node_edit_from_json({{"op", "SPLIT"}}), ErrorCode::MalformedDocument);
  }

  TEST_CASE("natural-language modification adds two highlighted nodes") {
    Rig rig;
    rig.manager.submit_prompt(rig.id, kPrompt1);
    rig.manager.apply_node_edits(rig.id, walkthrough_edits());
    auto r = rig.manager.modify_graph_nl(rig.id, kModify);
    REQUIRE(r.delta.added_nodes.size() == 2);
    CHECK(r.delta.added_nodes[0].id == "m1_1");
    CHECK(r.delta.added_nodes[1].id == "m1_2");
    CHECK(r.delta.added_edges ==
          std::vector<TaskEdge>{{"u1", "m1_1", EdgeKind::DataFlow}, {"m1_1", "m1_2", EdgeKind::DataFlow}});
    CHECK(r.delta.removed_nodes.empty());
    for (const auto& n : r.delta.added_nodes) {
      CHECK(r.triple.graph.find(n.id)->origin == TaskOrigin::NlModified);
      CHECK(r.view.highlight.count(n.id));
    }
    CHECK(rig.state().focus == FocusSet{"i3"});
    check_consistent(rig.state());

    auto same = rig.manager.modify_graph_nl(rig.id, "no change please");
    CHECK(same.delta.empty());
    CHECK(rig.state().focus == FocusSet{"i3"});

    rig.backend->script("modify_graph", {MockReply::text("nope"), MockReply::text("{\"graph\": 3}")});
    auto before = rig.state();
    CHECK_ERROR(rig.manager.modify_graph_nl(rig.id, kModify), ErrorCode::InvalidTripleOutput);
    CHECK(rig.state() == before);
  }

  TEST_CASE("confirm conditions on the serialized graph and is repeatable") {
    Rig rig;
    rig.manager.submit_prompt(rig.id, kPrompt1);
    rig.manager.apply_node_edits(rig.id, walkthrough_edits());
    rig.manager.modify_graph_nl(rig.id, kModify);
    auto doc = to_document(*rig.state().current_triple);
    auto a = rig.manager.confirm_graph(rig.id);
    bool found = false;
    for (const auto& m : a.conditioning) found |= m.content.find(doc) != std::string::npos;
    CHECK(found);
    CHECK(a.conditioning.back() == ChatMessage{"user", kPrompt1});
    for (const auto& line : {"t1_1", "t1_2", "u1", "m1_1", "m1_2"})
      CHECK(a.code.find(rig.state().current_triple->graph.find(line)->label) != std::string::npos);
    auto s = rig.state();
    CHECK(s.status == SessionStatus::Generated);
    CHECK(s.transcript.back().code == a.code);
    CHECK(s.pending_edits.empty());

    auto b = rig.manager.confirm_graph(rig.id);
    CHECK(b.conditioning == a.conditioning);
    auto calls = rig.backend->calls();
    CHECK(calls[calls.size() - 1].messages == calls[calls.size() - 2].messages);
  }

  TEST_CASE("second prompt adds one intent and only new nodes") {
    Rig rig;
    rig.manager.submit_prompt(rig.id, kPrompt1);
    rig.manager.apply_node_edits(rig.id, walkthrough_edits());
    rig.manager.modify_graph_nl(rig.id, kModify);
    auto code1 = rig.manager.confirm_graph(rig.id).code;
    auto r = rig.manager.submit_prompt(rig.id, kPrompt2);
    CHECK(r.triple.round == 2);
    CHECK(r.triple.intent_tree.node("i0").children == std::vector<NodeId>{"i1", "i2", "i3", "i2_1"});
    CHECK(r.triple.intent_tree.node("i2_1").text == kPrompt2);
    CHECK(r.focus == FocusSet{"i2_1"});
    REQUIRE(r.delta.added_nodes.size() == 1);
    CHECK(r.delta.added_nodes[0].id == "t2_1");
    CHECK(r.delta.added_edges == std::vector<TaskEdge>{{"m1_2", "t2_1", EdgeKind::Dependency}});
    CHECK(r.delta.removed_nodes.empty());
    CHECK(r.delta.removed_edges.empty());
    CHECK(r.delta.relabelled_nodes.empty());
    CHECK(view_ids(r.view) == std::set<NodeId>{"u_i1", "u_i2", "u_i3", "t2_1"});
    CHECK(r.view.highlight == std::set<NodeId>{"t2_1"});
    CHECK(rig.state().transcript[0].updates.empty());
    CHECK(rig.state().transcript[1].updates.size() == 1);

    auto c = rig.manager.confirm_graph(rig.id);
    auto n = c.conditioning.size();
    REQUIRE(n >= 3);
    CHECK(c.conditioning[n - 3] == ChatMessage{"user", kPrompt1});
    CHECK(c.conditioning[n - 2] == ChatMessage{"assistant", code1});
    CHECK(c.conditioning[n - 1] == ChatMessage{"user", kPrompt2});
  }

  TEST_CASE("a no-change prompt falls back cleanly") {
    Rig rig;
    rig.manager.submit_prompt(rig.id, kPrompt1);
    rig.manager.confirm_graph(rig.id);
    rig.backend->script("intent_updates", {MockReply::text("??"), MockReply::text("!!")});
    auto r = rig.manager.submit_prompt(rig.id, "keep going");
    CHECK(r.tracker_fallback);
    CHECK(r.focus.empty());
    CHECK(rig.state().transcript.back().tracker_fallback);
    check_consistent(rig.state());
  }

  TEST_CASE("focus on a nested leaf") {
    Rig rig;
    rig.script_triple(fixture::nested());
    rig.manager.submit_prompt(rig.id, "anything");
    auto v = rig.manager.focus_intent(rig.id, "X");
    CHECK(view_ids(v) == std::set<NodeId>{"u_C", "g3", "g4", "u_M"});
    CHECK(v.highlight == std::set<NodeId>{"g3", "g4"});
    CHECK(rig.manager.expand_supernode(rig.id, "u_C") == std::vector<NodeId>{"g1", "g2"});
    CHECK_ERROR(rig.manager.expand_supernode(rig.id, "g3"), ErrorCode::NotASupernode);

    v = rig.manager.focus_intent(rig.id, "R");
    CHECK(view_ids(v) == node_set(rig.state().current_triple->graph));
    CHECK(v.supernodes().empty());
    CHECK_ERROR(rig.manager.focus_intent(rig.id, "Q"), ErrorCode::UnknownIntentId);
    check_consistent(rig.state());
  }

  TEST_CASE("preconditions by status") {
    Rig rig;
    CHECK_ERROR(rig.manager.confirm_graph(rig.id), ErrorCode::PreconditionFailed);
    CHECK_ERROR(rig.manager.apply_node_edits(rig.id, walkthrough_edits()), ErrorCode::PreconditionFailed);
    CHECK_ERROR(rig.manager.modify_graph_nl(rig.id, kModify), ErrorCode::PreconditionFailed);
    CHECK_ERROR(rig.manager.focus_intent(rig.id, "i0"), ErrorCode::PreconditionFailed);
    CHECK_ERROR(rig.manager.submit_prompt(rig.id, "   "), ErrorCode::PreconditionFailed);
    CHECK_ERROR(rig.manager.get("s999999"), ErrorCode::UnknownSession);
    rig.manager.submit_prompt(rig.id, kPrompt1);
    CHECK_ERROR(rig.manager.submit_prompt(rig.id, kPrompt2), ErrorCode::PreconditionFailed);
    rig.manager.confirm_graph(rig.id);
    CHECK_ERROR(rig.manager.apply_node_edits(rig.id, walkthrough_edits()), ErrorCode::PreconditionFailed);
    CHECK_ERROR(rig.manager.modify_graph_nl(rig.id, kModify), ErrorCode::PreconditionFailed);
  }

  TEST_CASE("extraction failure leaves the session as it was") {
    Rig rig;
    rig.backend->script("student_extract", {MockReply::error(ErrorCode::GatewayError)}, true);
    auto before = rig.state();
    CHECK_ERROR(rig.manager.submit_prompt(rig.id, kPrompt1), ErrorCode::ExtractionFailed);
    CHECK(rig.state() == before);

    Rig ok;
    ok.manager.submit_prompt(ok.id, kPrompt1);
    ok.manager.confirm_graph(ok.id);
    ok.backend->script("student_extract", {MockReply::text("junk"), MockReply::text("junk")});
    before = ok.state();
    CHECK_ERROR(ok.manager.submit_prompt(ok.id, kPrompt2), ErrorCode::ExtractionFailed);
    CHECK(ok.state() == before);
  }

  TEST_CASE("the teacher path runs when no student is configured") {
    auto backend = make_synthetic_backend();
    Gateway gw(backend, {mock_endpoints()[0], mock_endpoints()[1]}, RetryPolicy{2, std::chrono::milliseconds(0), [](std::chrono::milliseconds) {}});
    SessionManager manager(gw, fixture::templates());
    auto id = manager.create_session();
    manager.submit_prompt(id, kPrompt1);
    auto s = manager.get(id);
    CHECK(s.transcript[0].path == ExtractionPath::Teacher);
    CHECK(backend->call_count("teacher_code") == 1);
  }

  TEST_CASE("random call sequences respect the state machine") {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
      gen::Rng rng(seed);
      Rig rig;
      for (int step = 0; step < 30; ++step) {
        auto before = rig.state();
        auto out = driver::random_step(rng, rig.manager, rig.id);
        auto after = rig.state();
        if (!driver::allowed(out.op, out.before)) {
          CHECK(out.error == std::optional(ErrorCode::PreconditionFailed));
        }
        if (!out.ok) {
          CHECK(after == before);
        } else {
          CHECK(after.seq == before.seq + 1);
        }
        check_consistent(after);
      }
    }
  }

  TEST_CASE("sessions survive a reload") {
    auto dir = fixture::fresh_dir("store");
    Session expected;
    std::string id;
    {
      Rig rig(dir, 3);
      id = rig.id;
      rig.manager.submit_prompt(id, kPrompt1);
      rig.manager.apply_node_edits(id, walkthrough_edits());
      rig.manager.modify_graph_nl(id, kModify);
      rig.manager.confirm_graph(id);
      rig.manager.submit_prompt(id, kPrompt2);
      expected = rig.state();
    }
    CHECK(std::filesystem::exists(dir / id / "snapshot.json"));
    auto backend = make_synthetic_backend();
    auto gw = make_mock_gateway(backend);
    SessionManager again(gw, fixture::templates(), dir);
    CHECK(again.get(id) == expected);
    CHECK(again.create_session() == "s000002");
    CHECK(backend->calls().empty());
    CHECK(SessionStore(dir).load(id) == expected);
  }

  TEST_CASE("a torn tail is dropped and a corrupt middle is refused") {
    auto dir = fixture::fresh_dir("torn");
    Session expected;
    std::string id;
    {
      Rig rig(dir, 100);
      id = rig.id;
      rig.manager.submit_prompt(id, kPrompt1);
      expected = rig.state();
    }
    auto log = dir / id / "events.jsonl";
    auto size = std::filesystem::file_size(log);
    std::ofstream(log, std::ios::app) << R"({"type": "confirm", "seq": 3, "da)";
    CHECK(SessionStore(dir).load(id) == expected);
    CHECK(std::filesystem::file_size(log) == size);

    std::string text;
    {
      std::ifstream in(log);
      std::stringstream buf;
      buf << in.rdbuf();
      text = buf.str();
    }
    text.insert(text.find('\n') + 1, "{broken\n");
    std::ofstream(log, std::ios::trunc) << text;
    CHECK_ERROR(SessionStore(dir).load(id), ErrorCode::IoError);
  }

  TEST_CASE("listeners see every commit in order") {
    Rig rig;
    std::vector<json> notes;
    auto token = rig.manager.subscribe([&](const std::string& sid, const json& n) {
      CHECK(sid == rig.id);
      notes.push_back(n);
    });
    rig.manager.submit_prompt(rig.id, kPrompt1);
    rig.manager.focus_intent(rig.id, "i1");
    rig.manager.unsubscribe(token);
    rig.manager.confirm_graph(rig.id);
    REQUIRE(notes.size() == 2);
    CHECK(notes[0]["type"] == "prompt");
    CHECK(notes[0]["status"] == "GRAPH_REVIEW");
    CHECK(notes[1]["seq"] == 3);
  }

  TEST_CASE("events replay to the same session") {
    Rig rig;
    std::vector<json> events;
    auto dir = fixture::fresh_dir("replay");
    {
      Rig stored(dir, 1000);
      stored.manager.submit_prompt(stored.id, kPrompt1);
      stored.manager.apply_node_edits(stored.id, walkthrough_edits());
      stored.manager.confirm_graph(stored.id);
      std::ifstream in(dir / stored.id / "events.jsonl");
      Session replay;
      for (std::string line; std::getline(in, line);) apply_event(replay, json::parse(line));
      CHECK(replay == stored.state());
      CHECK(session_from_json(to_json(replay)) == replay);
    }
  }
}
