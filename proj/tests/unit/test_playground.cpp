#include <doctest.h>

#include <fstream>

#include "check.hpp"
#include "fixtures.hpp"
#include "taskalign/mock_responder.hpp"
#include "taskalign/playground.hpp"

using namespace taskalign;

namespace {

const char* const kNoProgress = R"({"predicted_outcomes": "nothing new", "verdicts": {}})";

struct Rig {
  std::shared_ptr<MockChatBackend> backend = make_synthetic_backend();
  Gateway gw = make_mock_gateway(backend);
  const TemplateStore& tpl = fixture::templates();

  PlaygroundRun run(int max_rounds = 20) {
    backend->script("intent_tree", {MockReply::text(fixture::scrape_tree_reply())});
    PlaygroundOptions opt;
    opt.max_rounds = max_rounds;
    return run_session("scrape web articles and organize them", gw, tpl, opt);
  }
};

}  // namespace

TEST_SUITE("playground") {
  TEST_CASE("canned five-node tree comes back all open") {
    Rig rig;
    std::string reply = fixture::scrape_tree_reply();
    auto pos = reply.find("\"NOT_COMPLETED\", \"children\": []");
    reply.replace(pos, 15, "\"COMPLETED\"");
    rig.backend->script("intent_tree", {MockReply::text(reply)});
    auto tree = construct_intent_tree("scrape web articles and organize them", rig.gw, rig.tpl);
    CHECK(tree.nodes.size() == 5);
    CHECK(tree.leaves() == std::vector<NodeId>{"c", "x", "m"});
    CHECK(tree.node("c").text == "data collection");
    CHECK(tree.node("x").text == "text extraction");
    CHECK(tree.node("m").text == "media download");
    for (const auto& [id, n] : tree.nodes) CHECK(n.state == IntentState::NotCompleted);
  }

  TEST_CASE("empty description and degenerate trees") {
    Rig rig;
    CHECK_ERROR(construct_intent_tree("  ", rig.gw, rig.tpl), ErrorCode::PreconditionFailed);
    std::string one_leaf = R"({"root":"r","nodes":[{"id":"r","text":"x","children":["a"]},{"id":"a","text":"y","children":[]}]})";
    rig.backend->script("intent_tree", {MockReply::text(one_leaf), MockReply::text(one_leaf)});
    CHECK_ERROR(construct_intent_tree("do a thing", rig.gw, rig.tpl), ErrorCode::DegenerateTree);
    rig.backend->script("intent_tree", {MockReply::text(one_leaf), MockReply::text(fixture::scrape_tree_reply())});
    CHECK(construct_intent_tree("do a thing", rig.gw, rig.tpl).leaves().size() == 3);
  }

  TEST_CASE("three paraphrase variants share the topology") {
    Rig rig;
    auto base = fixture::scrape_tree();
    auto variants = construct_intent_variants(base, 3, rig.gw, rig.tpl);
    REQUIRE(variants.size() == 3);
    std::set<std::string> roots;
    for (const auto& v : variants) {
      CHECK(v.root == base.root);
      for (const auto& [id, n] : base.nodes) CHECK(v.node(id).children == n.children);
      CHECK(v.node("c").text != base.node("c").text);
      roots.insert(v.node("r").text);
    }
    CHECK(roots.size() == 3);

    std::string other = R"({"root":"r","nodes":[{"id":"r","text":"x","children":["a","b"]},
      {"id":"a","text":"y","children":[]},{"id":"b","text":"z","children":[]}]})";
    rig.backend->script("intent_variant", {MockReply::text(other)});
    CHECK_ERROR(construct_intent_variants(base, 1, rig.gw, rig.tpl), ErrorCode::DegenerateTree);
  }

  TEST_CASE("the simulated user targets the first open leaf") {
    Rig rig;
    PlaygroundSession s;
    s.description = "scrape web articles and organize them";
    s.tree = fixture::scrape_tree();
    std::vector<NodeId> targets;
    for (const NodeId& done : {"c", "x", "m"}) {
      simulate_user_prompt(s, rig.gw, rig.tpl);
      targets.push_back(rig.backend->calls().back().context["target"]);
      s.tree.node(done).state = IntentState::Completed;
      s.transcript.push_back({});
    }
    CHECK(targets == std::vector<NodeId>{"c", "x", "m"});
    CHECK_ERROR(simulate_user_prompt(s, rig.gw, rig.tpl), ErrorCode::PreconditionFailed);
    CHECK(prompt_style(1) != prompt_style(4));
  }

  TEST_CASE("verdicts flip states and propagate upward, never back") {
    auto tree = fixture::scrape_tree();
    ExecutionReport r;
    r.verdicts = {{"x", IntentState::Completed}};
    CHECK(apply_verdicts(tree, r) == std::vector<NodeId>{"x"});
    CHECK(tree.node("x").state == IntentState::Completed);
    CHECK(tree.node("p").state == IntentState::NotCompleted);
    r.verdicts = {{"x", IntentState::NotCompleted}, {"m", IntentState::Completed}};
    CHECK(apply_verdicts(tree, r) == std::vector<NodeId>{"p", "m"});
    CHECK(tree.node("x").state == IntentState::Completed);
    r.verdicts = {};
    CHECK(apply_verdicts(tree, r).empty());
  }

  TEST_CASE("analyzer verdicts must name known intents") {
    Rig rig;
    rig.backend->script("analyzer", {MockReply::text(R"({"verdicts": {"zz": "COMPLETED"}})")});
    CHECK_ERROR(analyze_execution("print(1)", fixture::scrape_tree(), rig.gw, rig.tpl), ErrorCode::InvalidVerdict);
    CHECK_ERROR(analyze_execution(" ", fixture::scrape_tree(), rig.gw, rig.tpl), ErrorCode::PreconditionFailed);
  }

  TEST_CASE("completing every leaf in three rounds") {
    Rig rig;
    auto run = rig.run();
    CHECK(run.session.status == PlaygroundStatus::Completed);
    REQUIRE(run.session.transcript.size() == 3);
    CHECK(run.dataset_lines.size() == 3);
    CHECK(run.session.transcript[0].target == "c");
    CHECK(run.session.transcript[1].target == "x");
    CHECK(run.session.transcript[2].target == "m");
    CHECK(run.session.transcript[2].state_updates == std::vector<NodeId>{"r", "p", "m"});
    for (std::size_t i = 0; i < 3; ++i) CHECK(json::parse(run.dataset_lines[i])["round"] == i + 1);
  }

  TEST_CASE("zero progress stalls at exactly round five") {
    Rig rig;
    rig.backend->script("analyzer", {MockReply::text(kNoProgress)}, true);
    auto run = rig.run();
    CHECK(run.session.status == PlaygroundStatus::Stalled);
    CHECK(run.session.transcript.size() == 5);
    CHECK(run.session.stagnation_counter == 5);
    CHECK(run.dataset_lines.size() == 5);
  }

  TEST_CASE("progress after three idle rounds resets the counter") {
    Rig rig;
    rig.backend->script("analyzer", {MockReply::text(kNoProgress), MockReply::text(kNoProgress),
                                     MockReply::text(kNoProgress), MockReply::text(R"({"verdicts": {"c": "COMPLETED"}})"),
                                     MockReply::text(kNoProgress)});
    auto run = rig.run(5);
    REQUIRE(run.session.transcript.size() == 5);
    CHECK(run.session.transcript[3].state_updates == std::vector<NodeId>{"c"});
    CHECK(run.session.stagnation_counter == 1);
    CHECK(run.session.status == PlaygroundStatus::Running);
    CHECK(run.dataset_lines.size() == 5);
  }

  TEST_CASE("gateway errors abort after a checkpoint") {
    Rig rig;
    rig.backend->script("intent_tree", {MockReply::text(fixture::scrape_tree_reply())});
    rig.backend->script("analyzer", {MockReply::text(R"({"verdicts": {"c": "COMPLETED"}})"),
                                     MockReply::error(ErrorCode::AuthFailure)});
    std::vector<std::size_t> seen;
    PlaygroundOptions opt;
    opt.checkpoint = [&](const PlaygroundSession& s) { seen.push_back(s.transcript.size()); };
    CHECK_ERROR(run_session("scrape web articles and organize them", rig.gw, rig.tpl, opt), ErrorCode::AuthFailure);
    CHECK(seen == std::vector<std::size_t>{1, 1});
  }

  TEST_CASE("transcripts round-trip through files") {
    Rig rig;
    auto run = rig.run();
    auto dir = fixture::fresh_dir("transcript");
    write_transcript(dir / "s.json", run.session);
    std::ifstream in(dir / "s.json");
    auto back = playground_session_from_json(json::parse(in));
    CHECK(to_json(back) == to_json(run.session));
    CHECK_FALSE(std::filesystem::exists(dir / "s.json.tmp"));
  }

  TEST_CASE("many sessions on a worker pool") {
    auto out = run_many(6, 3, [](std::size_t i) {
      auto backend = make_synthetic_backend();
      auto gw = make_mock_gateway(backend);
      if (i == 4) throw Error(ErrorCode::GatewayError, "boom");
      backend->script("intent_tree", {MockReply::text(fixture::scrape_tree_reply())});
      return run_session("scrape web articles and organize them", gw, fixture::templates(), {});
    });
    REQUIRE(out.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      if (i == 4) {
        CHECK_FALSE(out[i].run);
        CHECK(out[i].error.find("boom") != std::string::npos);
      } else {
        REQUIRE(out[i].run);
        CHECK(out[i].run->session.status == PlaygroundStatus::Completed);
      }
    }
  }
}
