#include "taskalign/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "taskalign/errors.hpp"

namespace taskalign {

namespace {

bool word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

using Ngram = std::vector<std::string>;

std::map<Ngram, std::int64_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<Ngram, std::int64_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

std::int64_t clipped_overlap(const std::map<Ngram, std::int64_t>& cand,
                             const std::map<Ngram, std::int64_t>& ref) {
  std::int64_t overlap = 0;
  for (const auto& [g, c] : cand)
    if (auto it = ref.find(g); it != ref.end()) overlap += std::min(c, it->second);
  return overlap;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double f1(double overlap, double cand_total, double ref_total) {
  if (overlap <= 0) return 0.0;
  double p = overlap / cand_total, r = overlap / ref_total;
  return 2 * p * r / (p + r);
}

void require_tokens(const std::vector<std::string>& tokens, const char* which) {
  if (tokens.empty()) fail(ErrorCode::EmptyText, std::string(which) + " has no tokens");
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    if (!std::isspace(c)) out.emplace_back(1, ch);
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double rouge_tokens(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                    RougeVariant variant) {
  require_tokens(cand, "candidate");
  require_tokens(ref, "reference");
  if (variant == RougeVariant::L) {
    auto lcs = static_cast<double>(lcs_length(cand, ref));
    return f1(lcs, static_cast<double>(cand.size()), static_cast<double>(ref.size()));
  }
  std::size_t n = variant == RougeVariant::One ? 1 : 2;
  if (cand.size() < n && ref.size() < n) return cand == ref ? 1.0 : 0.0;
  if (cand.size() < n || ref.size() < n) return 0.0;
  auto overlap = static_cast<double>(clipped_overlap(ngram_counts(cand, n), ngram_counts(ref, n)));
  return f1(overlap, static_cast<double>(cand.size() - n + 1), static_cast<double>(ref.size() - n + 1));
}

double rouge(std::string_view candidate, std::string_view reference, RougeVariant variant) {
  return rouge_tokens(tokenize(candidate), tokenize(reference), variant);
}

double bleu_tokens(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  require_tokens(cand, "candidate");
  std::size_t max_order = std::min<std::size_t>(4, cand.size());
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_order; ++n) {
    auto matches = static_cast<double>(clipped_overlap(ngram_counts(cand, n), ngram_counts(ref, n)));
    auto total = static_cast<double>(cand.size() - n + 1);
    if (matches == 0) {
      if (n == 1) return 0.0;
      matches = kBleuEpsilon;
    }
    log_sum += std::log(matches / total);
  }
  double geo = std::exp(log_sum / static_cast<double>(max_order));
  auto c = static_cast<double>(cand.size()), r = static_cast<double>(ref.size());
  double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * geo;
}

double bleu(std::string_view candidate, std::string_view reference) {
  return bleu_tokens(tokenize(candidate), tokenize(reference));
}

SimilarityScores score_pair(std::string_view candidate, std::string_view reference) {
  auto c = tokenize(candidate), r = tokenize(reference);
  return {rouge_tokens(c, r, RougeVariant::One), rouge_tokens(c, r, RougeVariant::Two),
          rouge_tokens(c, r, RougeVariant::L), bleu_tokens(c, r)};
}

SimilarityScores score_corpus(const std::vector<TextPair>& pairs) {
  if (pairs.empty()) fail(ErrorCode::EmptyCorpus, "no pairs to score");
  SimilarityScores sum;
  for (const auto& p : pairs) {
    auto s = score_pair(p.candidate, p.reference);
    sum.rouge1 += s.rouge1;
    sum.rouge2 += s.rouge2;
    sum.rougeL += s.rougeL;
    sum.bleu += s.bleu;
  }
  auto n = static_cast<double>(pairs.size());
  return {sum.rouge1 / n, sum.rouge2 / n, sum.rougeL / n, sum.bleu / n};
}

EfficiencyRecord::EfficiencyRecord(std::int64_t valid_tokens, double elapsed_seconds, std::string hardware_tag)
    : valid_tokens_(valid_tokens), elapsed_(elapsed_seconds), hardware_(std::move(hardware_tag)) {
  if (!(elapsed_seconds > 0)) fail(ErrorCode::ZeroRate, "elapsed time must be positive");
  if (valid_tokens < 0) fail(ErrorCode::ZeroRate, "valid token count must be non-negative");
}

double speedup(double student_rate, double baseline_rate) {
  if (!(student_rate > 0) || !(baseline_rate > 0)) fail(ErrorCode::ZeroRate, "rates must be positive");
  return student_rate / baseline_rate;
}

double speedup(const EfficiencyRecord& student, const EfficiencyRecord& baseline) {
  return speedup(student.rate(), baseline.rate());
}

std::string render_similarity_report(const std::vector<ReportColumn>& columns) {
  std::ostringstream out;
  const int metric_w = 9, col_w = 14;
  // Header rows: model names, then settings.
  out << std::left << std::setw(metric_w) << "";
  for (const auto& c : columns) out << std::setw(col_w) << c.model;
  out << '\n' << std::setw(metric_w) << "Metric";
  for (const auto& c : columns) out << std::setw(col_w) << c.setting;
  out << '\n' << std::string(static_cast<std::size_t>(metric_w + col_w * static_cast<int>(columns.size())), '-') << '\n';
  auto row = [&](const char* name, double SimilarityScores::*field) {
    out << std::setw(metric_w) << name;
    for (const auto& c : columns) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(4) << c.scores.*field;
      out << std::setw(col_w) << cell.str();
    }
    out << '\n';
  };
  row("ROUGE-1", &SimilarityScores::rouge1);
  row("ROUGE-2", &SimilarityScores::rouge2);
  row("ROUGE-L", &SimilarityScores::rougeL);
  row("BLEU", &SimilarityScores::bleu);
  out << std::setw(metric_w) << "Samples";
  for (const auto& c : columns) out << std::setw(col_w) << c.samples;
  out << '\n';
  return out.str();
}

nlohmann::json to_json(const SimilarityScores& s) {
  return {{"rouge1", s.rouge1}, {"rouge2", s.rouge2}, {"rougeL", s.rougeL}, {"bleu", s.bleu}};
}

}  // namespace taskalign
