#include "fixtures.hpp"

#include <atomic>
#include <unistd.h>

namespace fixture {

using namespace taskalign;

namespace {

IntentNode intent(NodeId id, std::string text, std::vector<NodeId> children = {}) {
  return {std::move(id), std::move(text), IntentState::NotCompleted, std::move(children)};
}

TaskNode task(NodeId id, std::string label) { return {std::move(id), std::move(label), "", TaskOrigin::Extracted}; }

}  // namespace

Triple rab() {
  IntentTree t;
  t.root = "R";
  for (auto n : {intent("R", "scrape and organize", {"A", "B"}), intent("A", "collect pages"), intent("B", "extract text")})
    t.nodes.emplace(n.id, n);
  UnderstandingGraph g;
  g.nodes = {task("g1", "fetch index"), task("g2", "fetch articles"), task("g3", "parse html"),
             task("g4", "strip tags"), task("g5", "save text")};
  g.edges = {{"g1", "g2", EdgeKind::DataFlow},
             {"g2", "g3", EdgeKind::DataFlow},
             {"g3", "g4", EdgeKind::Dependency},
             {"g3", "g5", EdgeKind::Dependency}};
  Mapping m{{{"A", {"g1", "g2"}}, {"B", {"g3", "g4", "g5"}}}};
  return make_triple(t, g, m, 0);
}

Triple nested() {
  IntentTree t;
  t.root = "R";
  for (auto n : {intent("R", "scrape web articles and organize them", {"C", "P"}), intent("C", "data collection"),
                 intent("P", "process articles", {"X", "M"}), intent("X", "text extraction"),
                 intent("M", "media download")})
    t.nodes.emplace(n.id, n);
  UnderstandingGraph g;
  g.nodes = {task("g1", "fetch index"), task("g2", "fetch articles"), task("g3", "parse html"),
             task("g4", "clean text"), task("g5", "download images")};
  g.edges = {{"g1", "g2", EdgeKind::DataFlow},
             {"g2", "g3", EdgeKind::DataFlow},
             {"g3", "g4", EdgeKind::DataFlow},
             {"g4", "g5", EdgeKind::Dependency},
             {"g2", "g5", EdgeKind::DataFlow}};
  Mapping m{{{"C", {"g1", "g2"}}, {"X", {"g3", "g4"}}, {"M", {"g5"}}}};
  return make_triple(t, g, m, 0);
}

IntentTree scrape_tree() { return intent_tree_from_json(json::parse(scrape_tree_reply())); }

std::string scrape_tree_reply() {
  return R"({
  "root": "r",
  "version": 0,
  "nodes": [
    {"id": "r", "text": "scrape web articles and organize them", "state": "NOT_COMPLETED", "children": ["c", "p"]},
    {"id": "c", "text": "data collection", "state": "NOT_COMPLETED", "children": []},
    {"id": "p", "text": "process the articles", "state": "NOT_COMPLETED", "children": ["x", "m"]},
    {"id": "x", "text": "text extraction", "state": "NOT_COMPLETED", "children": []},
    {"id": "m", "text": "media download", "state": "NOT_COMPLETED", "children": []}
  ]
})";
}

const char* const kCrawlerCode = R"(import requests
from bs4 import BeautifulSoup

def crawl(url):
    page = requests.get(url)
    soup = BeautifulSoup(page.text, "html.parser")
    return [a["href"] for a in soup.find_all("a")]
)";

std::filesystem::path fresh_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("taskalign_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

const TemplateStore& templates() {
  static const TemplateStore store = TemplateStore::from_default_location();
  return store;
}

}  // namespace fixture
