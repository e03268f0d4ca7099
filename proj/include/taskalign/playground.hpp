#pragma once

// Multi-agent dataset synthesis. Four model-backed agents share one intent
// tree: a constructor builds it from a seed description, a simulated domain
// user asks for the first open leaf, a code generator answers, and an
// execution analyzer predicts the outcome and marks finished subtasks. Each
// round also runs teacher extraction and yields one distillation line.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taskalign/extractor.hpp"
#include "taskalign/gateway.hpp"
#include "taskalign/templates.hpp"
#include "taskalign/triple.hpp"

namespace taskalign {

inline constexpr int kStagnationLimit = 5;

enum class PlaygroundStatus { Running, Completed, Stalled };

std::string_view to_string(PlaygroundStatus s);
PlaygroundStatus parse_playground_status(std::string_view s);

struct ExecutionReport {
  std::string predicted_outcomes;
  std::vector<std::string> file_changes;
  std::vector<std::string> errors;
  std::map<NodeId, IntentState> verdicts;
};

struct PlaygroundRound {
  int round = 0;
  NodeId target;
  std::string prompt;
  std::string code;
  ExecutionReport report;
  std::vector<NodeId> state_updates;  // ids whose state flipped this round
};

struct PlaygroundSession {
  std::string description;
  IntentTree tree;
  std::vector<PlaygroundRound> transcript;
  int stagnation_counter = 0;
  PlaygroundStatus status = PlaygroundStatus::Running;
};

json to_json(const ExecutionReport& r);
ExecutionReport execution_report_from_json(const json& doc);
json to_json(const PlaygroundSession& s);
PlaygroundSession playground_session_from_json(const json& doc);

/// Builds the tree for `description`; all states NOT_COMPLETED. A reply with
/// fewer than two leaves is retried once, then raises DegenerateTree.
IntentTree construct_intent_tree(const std::string& description, Gateway& gateway,
                                 const TemplateStore& templates);

/// `count` paraphrases of `base`: same ids and structure, reworded texts.
std::vector<IntentTree> construct_intent_variants(const IntentTree& base, std::size_t count,
                                                  Gateway& gateway, const TemplateStore& templates);

std::optional<NodeId> first_open_leaf(const IntentTree& tree);

/// Style instruction for round `round`; technical specificity grows with it.
std::string prompt_style(int round);

/// Prompt from the simulated user aimed at the first NOT_COMPLETED leaf.
/// Requires a RUNNING session with an open leaf (PreconditionFailed).
std::string simulate_user_prompt(const PlaygroundSession& session, Gateway& gateway,
                                 const TemplateStore& templates, const std::string& domain = "non-technical");

/// Model-predicted execution of `code`. Throws InvalidVerdict for ids not in `tree`.
ExecutionReport analyze_execution(const std::string& code, const IntentTree& tree, Gateway& gateway,
                                  const TemplateStore& templates);

/// Applies verdicts without ever reverting a COMPLETED node, then marks
/// internal nodes whose children are all COMPLETED. Returns flipped ids in
/// preorder.
std::vector<NodeId> apply_verdicts(IntentTree& tree, const ExecutionReport& report);

struct PlaygroundRun {
  PlaygroundSession session;
  std::vector<std::string> dataset_lines;
};

struct PlaygroundOptions {
  int max_rounds = 20;
  std::string domain = "non-technical";
  /// Called after every round and once more on abort; used to persist the
  /// transcript.
  std::function<void(const PlaygroundSession&)> checkpoint;
};

/// Runs the collaboration loop until COMPLETED, STALLED (kStagnationLimit
/// consecutive rounds without a state flip) or max_rounds. Gateway errors
/// abort the run after a final checkpoint.
PlaygroundRun run_session(const std::string& description, Gateway& gateway, const TemplateStore& templates,
                          const PlaygroundOptions& options);
/// Same loop over an already-constructed tree.
PlaygroundRun run_session_with_tree(const std::string& description, IntentTree tree, Gateway& gateway,
                                    const TemplateStore& templates, const PlaygroundOptions& options);

struct ManyOutcome {
  std::optional<PlaygroundRun> run;
  std::string error;
};

/// Runs `job(i)` for i in [0, count) on at most `workers` threads.
std::vector<ManyOutcome> run_many(std::size_t count, std::size_t workers,
                                  const std::function<PlaygroundRun(std::size_t)>& job);

void write_transcript(const std::filesystem::path& path, const PlaygroundSession& session);

}  // namespace taskalign
