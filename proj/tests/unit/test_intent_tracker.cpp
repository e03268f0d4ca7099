#include <doctest.h>

#include <functional>

#include "check.hpp"
#include "fixtures.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "taskalign/intent_tracker.hpp"
#include "taskalign/mock_responder.hpp"

using namespace taskalign;

namespace {

IntentTree single_root() {
  IntentTree t;
  t.root = "r";
  t.nodes.emplace("r", IntentNode{"r", "scrape the site", IntentState::NotCompleted, {}});
  return t;
}

// r -> a -> {a1}, r -> b -> {b1}
IntentTree four_node() {
  IntentTree t;
  t.root = "r";
  t.nodes.emplace("r", IntentNode{"r", "scrape the site", IntentState::NotCompleted, {"a", "b"}});
  t.nodes.emplace("a", IntentNode{"a", "get page text", IntentState::NotCompleted, {"a1"}});
  t.nodes.emplace("b", IntentNode{"b", "clean page text", IntentState::NotCompleted, {"b1"}});
  t.nodes.emplace("a1", IntentNode{"a1", "strip html", IntentState::NotCompleted, {}});
  t.nodes.emplace("b1", IntentNode{"b1", "drop ads", IntentState::NotCompleted, {}});
  return t;
}

// Shape with texts and states but no ids.
std::string shape(const IntentTree& t, const NodeId& id) {
  const auto& n = t.node(id);
  std::string s = "(" + n.text + "|" + std::string(to_string(n.state));
  for (const auto& c : n.children) s += shape(t, c);
  return s + ")";
}

std::set<NodeId> touched(const IntentTree& t, const IntentUpdate& u) {
  std::set<NodeId> ids;
  if (auto* r = std::get_if<update::Refine>(&u.op)) ids = {r->id};
  if (auto* a = std::get_if<update::Add>(&u.op)) ids = {a->parent_id};
  if (auto* m = std::get_if<update::MarkState>(&u.op)) ids = {m->id};
  if (auto* p = std::get_if<update::Reparent>(&u.op)) {
    ids = {p->id, p->new_parent_id};
    if (auto parent = t.parent_of(p->id)) ids.insert(*parent);
  }
  return ids;
}

}  // namespace

TEST_SUITE("intent_tracker") {
  TEST_CASE("NOOP keeps the structure and bumps the version") {
    auto t = four_node();
    auto r = apply_updates(t, {{update::Noop{}}});
    CHECK(r.tree.version == t.version + 1);
    CHECK(r.tree.nodes == t.nodes);
    CHECK(r.focus.empty());
  }

  TEST_CASE("ADD under the root") {
    auto r = apply_updates(single_root(), {{update::Add{"r", "download images"}}});
    REQUIRE(r.tree.node("r").children.size() == 1);
    NodeId id = r.tree.node("r").children[0];
    CHECK(r.tree.node(id).text == "download images");
    CHECK(r.focus == FocusSet{id});
    CHECK(r.created == std::vector<NodeId>{id});
  }

  TEST_CASE("MERGE of two siblings unions their children") {
    auto r = apply_updates(four_node(), {{update::Merge{"a", "b", "extract text"}}});
    REQUIRE(r.merges.size() == 1);
    NodeId m = r.merges[0].merged;
    CHECK_FALSE(r.tree.contains("a"));
    CHECK_FALSE(r.tree.contains("b"));
    CHECK(r.tree.node("r").children == std::vector<NodeId>{m});
    CHECK(r.tree.node(m).text == "extract text");
    CHECK(r.tree.node(m).children == std::vector<NodeId>{"a1", "b1"});
    CHECK(r.focus == FocusSet{m});
  }

  TEST_CASE("MERGE moves mapping claims onto the merged node") {
    auto r = apply_updates(four_node(), {{update::Merge{"a", "b", "extract text"}}});
    Mapping m{{{"a", {"g1"}}, {"b", {"g2", "g1"}}, {"r", {"g3"}}}};
    Mapping out = remap_merged(m, r.merges);
    const MappingEntry* e = out.find(r.merges[0].merged);
    REQUIRE(e != nullptr);
    CHECK(e->task_node_ids == std::vector<NodeId>{"g1", "g2"});
    CHECK(out.find("a") == nullptr);
    CHECK(out.find("r")->task_node_ids == std::vector<NodeId>{"g3"});
  }

  TEST_CASE("errors") {
    auto t = four_node();
    CHECK_ERROR(apply_updates(t, {{update::Refine{"zz", "x"}}}), ErrorCode::UnknownIntentId);
    CHECK_ERROR(apply_updates(t, {{update::Reparent{"a", "a1"}}}), ErrorCode::CycleWouldForm);
    CHECK_ERROR(apply_updates(t, {{update::Reparent{"r", "a"}}}), ErrorCode::CycleWouldForm);
    CHECK_ERROR(apply_updates(t, {{update::Merge{"a", "a", "x"}}}), ErrorCode::ConflictingUpdates);
    CHECK_ERROR(apply_updates(t, {{update::Merge{"a", "b", "x"}}, {update::Merge{"a", "a1", "y"}}}),
                ErrorCode::ConflictingUpdates);
    CHECK_ERROR(apply_updates(t, {{update::Add{"r", "dup", "a"}}}), ErrorCode::DuplicateId);
  }

  TEST_CASE("the input tree is not modified on failure") {
    auto t = four_node();
    auto copy = t;
    CHECK_ERROR(apply_updates(t, {{update::Refine{"a", "changed"}}, {update::Refine{"zz", "x"}}}),
                ErrorCode::UnknownIntentId);
    CHECK(t == copy);
  }

  TEST_CASE("update documents round-trip") {
    gen::Rng rng(21);
    auto t = four_node();
    for (int i = 0; i < 200; ++i) {
      auto seq = gen::random_update_sequence(rng, t, rng.between(0, 6));
      CHECK(updates_from_json(updates_to_json(seq)) == seq);
    }
  }

  TEST_CASE("random valid sequences keep a valid tree and a focus inside it") {
    gen::Rng rng(22);
    for (int i = 0; i < 2000; ++i) {
      auto base = gen::random_tree(rng, rng.between(1, 7));
      auto seq = gen::random_update_sequence(rng, base, rng.between(1, 8));
      auto r = apply_updates(base, seq);
      REQUIRE(oracle::is_valid_tree(r.tree));
      CHECK(r.tree.version == base.version + 1);
      for (const auto& f : r.focus) CHECK(r.tree.contains(f));
    }
  }

  TEST_CASE("NOOP-only sequences give an empty focus") {
    for (int n = 0; n < 5; ++n) {
      std::vector<IntentUpdate> seq(static_cast<std::size_t>(n), IntentUpdate{update::Noop{}});
      CHECK(apply_updates(four_node(), seq).focus.empty());
    }
  }

  TEST_CASE("permuting updates on disjoint ids gives isomorphic trees") {
    gen::Rng rng(23);
    int compared = 0;
    for (int i = 0; i < 3000 && compared < 500; ++i) {
      auto base = gen::random_tree(rng, rng.between(2, 7));
      auto u1 = gen::random_valid_update(rng, base);
      auto u2 = gen::random_valid_update(rng, base);
      if (std::holds_alternative<update::Merge>(u1.op) || std::holds_alternative<update::Merge>(u2.op)) continue;
      auto t1 = touched(base, u1), t2 = touched(base, u2);
      bool disjoint = std::none_of(t1.begin(), t1.end(), [&](const NodeId& id) { return t2.count(id) > 0; });
      if (!disjoint) continue;
      auto e12 = check::error_of([&] { apply_updates(base, {u1, u2}); });
      auto e21 = check::error_of([&] { apply_updates(base, {u2, u1}); });
      if (e12 || e21) continue;  // a reparent pair that only works in one order
      auto a = apply_updates(base, {u1, u2}).tree;
      auto b = apply_updates(base, {u2, u1}).tree;
      CHECK(shape(a, a.root) == shape(b, b.root));
      ++compared;
    }
    CHECK(compared >= 100);
  }

  TEST_CASE("propose_updates parses, validates and repairs once") {
    auto backend = std::make_shared<MockChatBackend>();
    auto gw = make_mock_gateway(backend);
    const auto& tpl = fixture::templates();
    auto t = four_node();

    backend->script("intent_updates", {MockReply::text(R"({"updates":[{"op":"NOOP"}]})")});
    auto ups = propose_updates(t, "looks fine", gw, tpl);
    REQUIRE(ups.size() == 1);
    CHECK(std::holds_alternative<update::Noop>(ups[0].op));

    backend->script("intent_updates",
                    {MockReply::text("```json\n{\"updates\":[{\"op\":\"ADD\",\"parent_id\":\"r\","
                                     "\"new_node\":{\"text\":\"download images\"}}]}\n```")});
    ups = propose_updates(t, "also get images", gw, tpl);
    REQUIRE(ups.size() == 1);
    auto* add = std::get_if<update::Add>(&ups[0].op);
    REQUIRE(add != nullptr);
    CHECK(add->parent_id == "r");
    CHECK(add->text == "download images");

    std::string bad = R"({"updates":[{"op":"REFINE","id":"nope","new_text":"x"}]})";
    backend->script("intent_updates", {MockReply::text(bad), MockReply::text(bad)});
    CHECK_ERROR(propose_updates(t, "change it", gw, tpl), ErrorCode::UnparseableProposal);

    backend->script("intent_updates", {MockReply::text(bad), MockReply::text(R"({"updates":[]})")});
    std::size_t before = backend->call_count("intent_updates");
    CHECK(propose_updates(t, "change it", gw, tpl).empty());
    CHECK(backend->call_count("intent_updates") == before + 2);
    auto last = backend->calls().back();
    CHECK(last.context.contains("repair_error"));
  }
}
