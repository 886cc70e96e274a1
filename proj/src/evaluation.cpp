#include "corag/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "corag/rng.hpp"

namespace corag::evaluation {
namespace {

bool is_ascii_punct(unsigned char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
         (c >= '{' && c <= '~');
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!current.empty()) tokens.push_back(std::move(current)), current.clear();
    } else {
      current += c;
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

double f1_single(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : gold) ++counts[t];
  int common = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  double precision = static_cast<double>(common) / static_cast<double>(pred.size());
  double recall = static_cast<double>(common) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

// Linear least squares of y on log(x + b) for fixed b; returns (a, c, rss).
struct LinearFit {
  double a = 0.0;
  double c = 0.0;
  double rss = 0.0;
};

LinearFit fit_for_b(std::span<const ScorePoint> points, double b) {
  double n = static_cast<double>(points.size());
  double sz = 0.0, szz = 0.0, sy = 0.0, szy = 0.0;
  for (const auto& p : points) {
    double z = std::log(p.avg_tokens + b);
    sz += z;
    szz += z * z;
    sy += p.metric_value;
    szy += z * p.metric_value;
  }
  LinearFit fit;
  double denom = n * szz - sz * sz;
  if (denom > 1e-30) {
    fit.a = (n * szy - sz * sy) / denom;
    fit.c = (sy - fit.a * sz) / n;
  } else {
    fit.a = 0.0;
    fit.c = sy / n;
  }
  for (const auto& p : points) {
    double r = p.metric_value - (fit.a * std::log(p.avg_tokens + b) + fit.c);
    fit.rss += r * r;
  }
  return fit;
}

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::string lowered;
  lowered.reserve(s.size());
  for (unsigned char c : s) {
    if (is_ascii_punct(c)) continue;
    lowered += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
  }
  auto tokens = split_ws(lowered);
  std::string out;
  for (const auto& t : tokens) {
    if (t == "a" || t == "an" || t == "the") continue;
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

bool exact_match(std::string_view prediction, std::span<const std::string> golds) {
  std::string normalized = normalize_answer(prediction);
  for (const auto& gold : golds)
    if (normalized == normalize_answer(gold)) return true;
  return false;
}

double f1(std::string_view prediction, std::span<const std::string> golds) {
  auto pred_tokens = split_ws(normalize_answer(prediction));
  double best = 0.0;
  bool any = false;
  for (const auto& gold : golds) {
    best = std::max(best, f1_single(pred_tokens, split_ws(normalize_answer(gold))));
    any = true;
  }
  return any ? best : 0.0;
}

bool recall_at_k(const RankedList& fused, std::span<const std::string> golds,
                 const DocLookup& lookup, int k) {
  if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
  std::vector<std::string> normalized_golds;
  for (const auto& gold : golds) {
    auto n = normalize_answer(gold);
    if (!n.empty()) normalized_golds.push_back(std::move(n));
  }
  if (normalized_golds.empty()) return false;
  for (std::size_t i = 0; i < fused.size() && i < static_cast<std::size_t>(k); ++i) {
    auto doc = lookup(fused[i].doc_id);
    if (!doc) throw std::runtime_error("recall_at_k: unknown doc_id " + fused[i].doc_id);
    std::string text = normalize_answer(doc->text);
    for (const auto& gold : normalized_golds)
      if (text.find(gold) != std::string::npos) return true;
  }
  return false;
}

std::vector<ScorePoint> pareto_frontier(const std::vector<ScorePoint>& points) {
  std::vector<ScorePoint> frontier;
  for (const auto& p : points) {
    bool dominated = false;
    for (const auto& q : points) {
      bool better_metric_no_more_tokens =
          q.metric_value > p.metric_value && q.avg_tokens <= p.avg_tokens;
      bool same_or_better_fewer_tokens =
          q.metric_value >= p.metric_value && q.avg_tokens < p.avg_tokens;
      if (better_metric_no_more_tokens || same_or_better_fewer_tokens) {
        dominated = true;
        break;
      }
    }
    if (!dominated) frontier.push_back(p);
  }
  std::sort(frontier.begin(), frontier.end(), [](const ScorePoint& a, const ScorePoint& b) {
    if (a.avg_tokens != b.avg_tokens) return a.avg_tokens < b.avg_tokens;
    if (a.metric_value != b.metric_value) return a.metric_value > b.metric_value;
    return a.label < b.label;
  });
  return frontier;
}

LogLinearFit fit_log_linear(std::span<const ScorePoint> points) {
  std::vector<double> xs;
  for (const auto& p : points) xs.push_back(p.avg_tokens);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  if (xs.size() < 3)
    throw std::invalid_argument("fit_log_linear needs >= 3 points with distinct avg_tokens");

  double min_x = xs.front();
  // Search over u = b + min_x so the argument of the log stays positive.
  const double u_lo = 1e-6;
  const double u_hi = 1e7 + min_x;
  auto rss_at = [&](double u) { return fit_for_b(points, u - min_x).rss; };

  // Coarse log-spaced scan, then golden-section refinement around the best.
  const int kGrid = 257;
  double best_u = u_lo;
  double best_rss = rss_at(u_lo);
  double log_lo = std::log(u_lo), log_hi = std::log(u_hi);
  for (int i = 0; i < kGrid; ++i) {
    double u = std::exp(log_lo + (log_hi - log_lo) * i / (kGrid - 1));
    double rss = rss_at(u);
    if (rss < best_rss) {
      best_rss = rss;
      best_u = u;
    }
  }
  double step = (log_hi - log_lo) / (kGrid - 1);
  double lo = std::max(u_lo, std::exp(std::log(best_u) - step));
  double hi = std::min(u_hi, std::exp(std::log(best_u) + step));
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  double f1v = rss_at(x1), f2v = rss_at(x2);
  for (int iter = 0; iter < 200; ++iter) {
    if (f1v < f2v) {
      hi = x2;
      x2 = x1;
      f2v = f1v;
      x1 = hi - phi * (hi - lo);
      f1v = rss_at(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1v = f2v;
      x2 = lo + phi * (hi - lo);
      f2v = rss_at(x2);
    }
  }
  double u = f1v < f2v ? x1 : x2;
  if (rss_at(u) > best_rss) u = best_u;

  double b = u - min_x;
  LinearFit linear = fit_for_b(points, b);
  return LogLinearFit{linear.a, b, linear.c, linear.rss};
}

ConfidenceInterval bootstrap_ci(std::span<const double> scores, int n_resamples, double level,
                                std::uint64_t seed) {
  if (scores.empty()) throw std::invalid_argument("bootstrap_ci: empty scores");
  if (n_resamples < 1) throw std::invalid_argument("bootstrap_ci: n_resamples must be >= 1");
  if (level <= 0.0 || level >= 1.0)
    throw std::invalid_argument("bootstrap_ci: level must be in (0, 1)");

  Rng rng(mix_seed(seed, 0xB0075742ull));
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(n_resamples));
  for (int r = 0; r < n_resamples; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      sum += scores[rng.bounded(scores.size())];
    means.push_back(sum / static_cast<double>(scores.size()));
  }
  std::sort(means.begin(), means.end());

  auto quantile = [&](double q) {
    double h = q * static_cast<double>(means.size() - 1);
    auto lo = static_cast<std::size_t>(h);
    auto hi = std::min(lo + 1, means.size() - 1);
    double frac = h - static_cast<double>(lo);
    return means[lo] + frac * (means[hi] - means[lo]);
  };
  double alpha = (1.0 - level) / 2.0;
  return ConfidenceInterval{quantile(alpha), quantile(1.0 - alpha)};
}

}  // namespace corag::evaluation
