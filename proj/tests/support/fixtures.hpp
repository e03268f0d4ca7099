#pragma once

#include <filesystem>
#include <string>

#include "taskalign/templates.hpp"
#include "taskalign/triple.hpp"

namespace fixture {

/// Root R with A owning {g1,g2} and B owning {g3,g4,g5};
/// edges g1->g2, g2->g3 (data flow), g3->g4, g3->g5 (dependency).
taskalign::Triple rab();

/// Root R with C owning {g1,g2} and P whose children X own {g3,g4} and M own {g5};
/// edges g1->g2, g2->g3, g3->g4, g4->g5, g2->g5.
taskalign::Triple nested();

/// Five-node tree: "scrape web articles and organize them" split into data
/// collection, and processing with text extraction and media download.
taskalign::IntentTree scrape_tree();
std::string scrape_tree_reply();

/// Canned stage-1 reply for the teacher path.
extern const char* const kCrawlerCode;

/// A fresh empty directory under the system temp dir.
std::filesystem::path fresh_dir(const std::string& tag);

const taskalign::TemplateStore& templates();

}  // namespace fixture
