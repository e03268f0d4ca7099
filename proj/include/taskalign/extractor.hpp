#pragma once

// Triple extraction over two paths:
//   teacher: prompt -> conversational model -> code; (prompt, code, previous
//            triple) -> extraction model -> triple
//   student: (prompt, previous triple) -> student model -> triple
// Every reply is validated; one repair retry re-sends the validation error.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "taskalign/gateway.hpp"
#include "taskalign/templates.hpp"
#include "taskalign/triple.hpp"

namespace taskalign {

enum class ExtractionPath { Teacher, Student };

std::string_view to_string(ExtractionPath path);

struct StageTiming {
  std::string stage;
  double latency_ms = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ExtractionTimings {
  std::vector<StageTiming> stages;
  /// Tokens of the serialized output triple.
  std::int64_t valid_tokens = 0;
  /// Tokens generated on the way that are not part of the triple (the
  /// intermediate code on the teacher path).
  std::int64_t overhead_tokens = 0;

  double total_ms() const;
};

struct ExtractionRecord {
  std::string prompt;
  std::optional<Triple> prev_triple;
  std::optional<std::string> intermediate_code;
  Triple triple;
  ExtractionPath path = ExtractionPath::Teacher;
  ExtractionTimings timings;
  int repair_retries = 0;
};

/// Token count used for valid-token accounting.
std::int64_t count_triple_tokens(const Triple& triple);

/// 1 - levenshtein(a, b) / max(|a|, |b|) over lowercased, trimmed text.
double edit_similarity(std::string_view a, std::string_view b);

/// Re-keys nodes of `next` that carry ids unknown to `prev` but whose text
/// matches a vanished `prev` node with similarity >= threshold. Applies to
/// task nodes (by label) and intent nodes (by text).
Triple reconcile_ids(const Triple& next, const Triple& prev, double threshold = 0.9);

struct TripleReply {
  Triple triple;
  std::vector<StageTiming> stages;
  int repair_retries = 0;
};

class Extractor {
 public:
  Extractor(Gateway& gateway, const TemplateStore& templates, double reconcile_threshold = 0.9);

  ExtractionRecord extract_teacher(const std::string& prompt, const std::optional<Triple>& prev);
  /// Teacher stage 2 only, for callers that already hold the stage-1 reply.
  ExtractionRecord extract_teacher_from_code(const std::string& prompt, const ChatExchange& code,
                                             const std::optional<Triple>& prev);
  ExtractionRecord extract_student(const std::string& prompt, const std::optional<Triple>& prev);

  /// Applies a natural-language modification to `current`; the round is kept.
  TripleReply modify(const Triple& current, const std::string& instruction);

  /// Sends `request`, validates the reply as a triple of `round`, and repairs
  /// once. Throws InvalidTripleOutput after the second invalid reply.
  TripleReply request_triple(ChatRequest request, std::int64_t round, const Triple* reconcile_against,
                             const std::string& stage);

 private:
  Gateway& gateway_;
  const TemplateStore& templates_;
  double threshold_;
};

/// Dataset line {"input": {"prompt", "prev_triple"}, "target", "round"} where
/// prev_triple and target hold serialized triple text. Teacher records only;
/// a student record raises PreconditionFailed.
std::string emit_distillation_pair(const ExtractionRecord& record);

}  // namespace taskalign
