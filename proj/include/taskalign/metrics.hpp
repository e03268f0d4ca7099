#pragma once

// Text-similarity metrics for comparing extracted triples, and the
// valid-tokens-per-second efficiency figure.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace taskalign {

/// Lowercased tokens; runs of letters/digits/underscore (and any non-ASCII
/// byte) form one token, every other non-space character is its own token.
std::vector<std::string> tokenize(std::string_view text);

enum class RougeVariant { One, Two, L };

/// F1 ROUGE over tokenize(). When neither side has an n-gram of the requested
/// order the score is 1 for identical token sequences and 0 otherwise.
/// Throws EmptyText if either text has no tokens.
double rouge(std::string_view candidate, std::string_view reference, RougeVariant variant);
double rouge_tokens(const std::vector<std::string>& candidate,
                    const std::vector<std::string>& reference, RougeVariant variant);

inline constexpr double kBleuEpsilon = 1e-9;

/// Sentence BLEU: max order min(4, |candidate|), uniform weights, brevity
/// penalty, zero higher-order matches smoothed with kBleuEpsilon. A candidate
/// with no unigram match scores exactly 0. Throws EmptyText on an empty
/// candidate.
double bleu(std::string_view candidate, std::string_view reference);
double bleu_tokens(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference);

struct SimilarityScores {
  double rouge1 = 0;
  double rouge2 = 0;
  double rougeL = 0;
  double bleu = 0;
};

SimilarityScores score_pair(std::string_view candidate, std::string_view reference);

struct TextPair {
  std::string candidate;  // student output
  std::string reference;  // teacher output
};

/// Arithmetic mean per metric. Throws EmptyCorpus on an empty list.
SimilarityScores score_corpus(const std::vector<TextPair>& pairs);

class EfficiencyRecord {
 public:
  /// Throws ZeroRate unless elapsed_seconds > 0.
  EfficiencyRecord(std::int64_t valid_tokens, double elapsed_seconds, std::string hardware_tag = {});

  std::int64_t valid_tokens() const { return valid_tokens_; }
  double elapsed_seconds() const { return elapsed_; }
  double rate() const { return static_cast<double>(valid_tokens_) / elapsed_; }
  const std::string& hardware_tag() const { return hardware_; }

 private:
  std::int64_t valid_tokens_;
  double elapsed_;
  std::string hardware_;
};

/// student.rate / baseline.rate. Throws ZeroRate when either rate is not positive.
double speedup(const EfficiencyRecord& student, const EfficiencyRecord& baseline);
double speedup(double student_rate, double baseline_rate);

/// One evaluated column of the report, e.g. ("Qwen 7B", "Fine-tuned").
struct ReportColumn {
  std::string model;
  std::string setting;
  SimilarityScores scores;
  std::size_t samples = 0;
};

/// Plain-text table: one row per metric, one column per (model, setting).
std::string render_similarity_report(const std::vector<ReportColumn>& columns);

nlohmann::json to_json(const SimilarityScores& s);

}  // namespace taskalign
