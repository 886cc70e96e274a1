#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corag/document.hpp"

// Answer scoring and scaling-curve analysis. EM/F1 follow the usual open-QA
// protocol: lowercase, strip punctuation, drop articles, collapse whitespace,
// then exact string match or token-multiset F1, best over golds.

namespace corag::evaluation {

std::string normalize_answer(std::string_view s);

bool exact_match(std::string_view prediction, std::span<const std::string> golds);

// Token-multiset F1 of the normalized strings; both sides empty -> 1,
// exactly one empty -> 0. Best over golds.
double f1(std::string_view prediction, std::span<const std::string> golds);

using DocLookup = std::function<std::optional<Document>(const std::string&)>;

// True when any of the top-k documents' normalized text contains any
// normalized gold as a substring. Titles are not searched.
bool recall_at_k(const RankedList& fused, std::span<const std::string> golds,
                 const DocLookup& lookup, int k);

struct ScorePoint {
  std::string label;
  double avg_tokens = 0.0;
  double metric_value = 0.0;
};

// Points not dominated by any other: q dominates p when q scores strictly
// better at no more tokens, or at least as well at strictly fewer tokens.
// Sorted by avg_tokens ascending.
std::vector<ScorePoint> pareto_frontier(const std::vector<ScorePoint>& points);

struct LogLinearFit {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double residual = 0.0;  // residual sum of squares
};

// Least-squares fit of metric = a*log(avg_tokens + b) + c. For fixed b the
// problem is linear in (a, c); b is found by a bounded scalar search over
// (-min(x) + 1e-6, 1e7]. Needs >= 3 distinct avg_tokens values.
LogLinearFit fit_log_linear(std::span<const ScorePoint> points);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
};

// Percentile bootstrap over resampled means, linear-interpolation quantiles.
// Deterministic given seed.
ConfidenceInterval bootstrap_ci(std::span<const double> scores, int n_resamples, double level,
                                std::uint64_t seed);

}  // namespace corag::evaluation
