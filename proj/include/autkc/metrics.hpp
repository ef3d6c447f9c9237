#pragma once

// Top-k error, AUTKC and the dataset-level "up" metrics, plus the exhaustive
// pair-counting comparison between AUTKC and top-k accuracy.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autkc/ranking.hpp"

namespace autkc {

/// Row-major n x C score matrix with one ground-truth label per row.
class ScoredSet {
 public:
  ScoredSet() = default;
  explicit ScoredSet(std::size_t num_classes) : classes_(num_classes) {
    if (num_classes < 2) throw std::invalid_argument("ScoredSet needs at least 2 classes");
  }

  void add(std::span<const double> scores, std::size_t label) {
    if (classes_ == 0) classes_ = scores.size();
    if (scores.size() != classes_)
      throw std::invalid_argument("inconsistent class count: expected " + std::to_string(classes_) +
                                  ", got " + std::to_string(scores.size()));
    detail::check_label(scores, label);
    scores_.insert(scores_.end(), scores.begin(), scores.end());
    labels_.push_back(label);
  }

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t num_classes() const noexcept { return classes_; }
  std::span<const double> scores(std::size_t i) const {
    return std::span<const double>(scores_).subspan(i * classes_, classes_);
  }
  std::size_t label(std::size_t i) const { return labels_[i]; }

 private:
  std::size_t classes_ = 0;
  std::vector<double> scores_;
  std::vector<std::size_t> labels_;
};

/// 1 iff the worst-case rank of y exceeds k.
inline int err_k(std::span<const double> s, std::size_t y, std::size_t k) {
  detail::check_cutoff(k, 1, s.size(), "k");
  return worst_case_rank(s, y) > k ? 1 : 0;
}

/// Average top-k error for k = 1..K, i.e. min(rank - 1, K) / K.
inline double aerr_K(std::span<const double> s, std::size_t y, std::size_t K) {
  detail::check_cutoff(K, 1, s.size() - 1, "K");
  const std::size_t rank = worst_case_rank(s, y);
  return static_cast<double>(std::min(rank - 1, K)) / static_cast<double>(K);
}

/// 0-1 form of the reformulated objective: (1/K)(-1 + sum_{k<=K+1} [s_y <= s_[k]]).
/// Computed from a full descending sort, independently of worst_case_rank.
inline double op1_loss_01(std::span<const double> s, std::size_t y, std::size_t K) {
  detail::check_label(s, y);
  detail::check_cutoff(K, 1, s.size() - 1, "K");
  std::vector<double> sorted(s.begin(), s.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  long hits = -1;
  for (std::size_t k = 0; k <= K; ++k)
    if (s[y] <= sorted[k]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(K);
}

namespace detail {

inline void check_set(const ScoredSet& set) {
  if (set.empty()) throw std::invalid_argument("empty score set");
}

}  // namespace detail

/// Integer tallies behind every dataset-level metric. hits[k-1] counts the
/// samples whose label is inside the top-k under worst-case ties.
struct CurveCounts {
  std::size_t n = 0;
  std::vector<std::size_t> hits;

  /// Numerator of AUTKC-up at K: sum_i (K - min(rank_i - 1, K)).
  std::size_t autkc_hits(std::size_t K) const {
    std::size_t total = 0;
    for (std::size_t k = 1; k <= K; ++k) total += hits[k - 1];
    return total;
  }
};

inline CurveCounts curve_counts(const ScoredSet& set, std::size_t k_max) {
  detail::check_set(set);
  detail::check_cutoff(k_max, 1, set.num_classes(), "k_max");
  CurveCounts counts{set.size(), std::vector<std::size_t>(k_max, 0)};
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::size_t rank = worst_case_rank(set.scores(i), set.label(i));
    for (std::size_t k = rank; k <= k_max; ++k) ++counts.hits[k - 1];
  }
  return counts;
}

/// AUTKC-up: (1/(nK)) sum_i |{k <= K+1 : s_y > s_[k]}|.
inline double autkc_up(const ScoredSet& set, std::size_t K) {
  detail::check_set(set);
  detail::check_cutoff(K, 1, set.num_classes() - 1, "K");
  std::size_t strict = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto s = set.scores(i);
    const double sy = s[set.label(i)];
    std::vector<double> sorted(s.begin(), s.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    for (std::size_t k = 0; k <= K; ++k)
      if (sy > sorted[k]) ++strict;
  }
  return static_cast<double>(strict) / (static_cast<double>(set.size()) * static_cast<double>(K));
}

/// Fraction of samples whose label beats every competitor outside the top-k,
/// i.e. 1 - mean err_k. A tie with the k-th competitor counts as a miss.
inline double topk_up(const ScoredSet& set, std::size_t k) {
  detail::check_set(set);
  detail::check_cutoff(k, 1, set.num_classes(), "k");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < set.size(); ++i)
    if (err_k(set.scores(i), set.label(i), k) == 0) ++hit;
  return static_cast<double>(hit) / static_cast<double>(set.size());
}

/// Top-k accuracy at every cutoff 1..k_max.
struct TopKCurve {
  std::vector<double> acc;

  std::size_t k_max() const noexcept { return acc.size(); }
  double at(std::size_t k) const { return acc.at(k - 1); }
};

inline TopKCurve topk_curve(const ScoredSet& set, std::size_t k_max) {
  const CurveCounts counts = curve_counts(set, k_max);
  TopKCurve curve;
  curve.acc.reserve(k_max);
  for (std::size_t h : counts.hits)
    curve.acc.push_back(static_cast<double>(h) / static_cast<double>(counts.n));
  return curve;
}

inline double mean_aerr_K(const ScoredSet& set, std::size_t K) {
  detail::check_set(set);
  detail::check_cutoff(K, 1, set.num_classes() - 1, "K");
  std::size_t total = 0;
  for (std::size_t i = 0; i < set.size(); ++i) total += std::min(worst_case_rank(set.scores(i), set.label(i)) - 1, K);
  return static_cast<double>(total) / (static_cast<double>(set.size()) * static_cast<double>(K));
}

// ---------------------------------------------------------------------------
// Normalized top-k accuracy gain
// ---------------------------------------------------------------------------

struct NormalizedGain {
  std::map<std::string, std::vector<double>> gains;
  double g_pos = 0.0;
  double g_neg = 0.0;
  /// Set when G+ or G- is zero; gains are then raw differences.
  bool degenerate = false;
};

inline NormalizedGain normalized_gain(const std::map<std::string, TopKCurve>& curves,
                                      const std::string& baseline) {
  const auto base_it = curves.find(baseline);
  if (base_it == curves.end()) throw std::invalid_argument("baseline '" + baseline + "' not present");
  const auto& base = base_it->second.acc;

  NormalizedGain out;
  double max_gain = -std::numeric_limits<double>::infinity();
  double min_gain = std::numeric_limits<double>::infinity();
  for (const auto& [name, curve] : curves) {
    if (curve.acc.size() != base.size())
      throw std::invalid_argument("curve '" + name + "' has k_max " + std::to_string(curve.acc.size()) +
                                  ", baseline has " + std::to_string(base.size()));
    std::vector<double> raw(base.size(), 0.0);
    if (name != baseline) {
      for (std::size_t k = 0; k < base.size(); ++k) {
        raw[k] = curve.acc[k] - base[k];
        max_gain = std::max(max_gain, raw[k]);
        min_gain = std::min(min_gain, raw[k]);
      }
    }
    out.gains.emplace(name, std::move(raw));
  }
  if (curves.size() == 1) max_gain = min_gain = 0.0;
  out.g_pos = std::abs(max_gain);
  out.g_neg = std::abs(min_gain);
  out.degenerate = out.g_pos == 0.0 || out.g_neg == 0.0;
  if (out.degenerate) return out;
  for (auto& [name, g] : out.gains)
    for (double& v : g) v = v > 0.0 ? v / out.g_pos : v / out.g_neg;
  return out;
}

// ---------------------------------------------------------------------------
// AUTKC vs top-k: degree of consistency and discriminancy
// ---------------------------------------------------------------------------

struct ComparisonCounts {
  std::size_t R = 0;  ///< both measures strictly agree
  std::size_t S = 0;  ///< strict disagreement
  std::size_t P = 0;  ///< AUTKC strict, top-k tied
  std::size_t Q = 0;  ///< top-k strict, AUTKC tied
  std::size_t pairs = 0;

  double degree_of_consistency() const {
    return R + S == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : static_cast<double>(R) / static_cast<double>(R + S);
  }
  /// P / Q; infinite when Q = 0 and P > 0.
  double degree_of_discriminancy() const {
    if (Q == 0) return P > 0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(P) / static_cast<double>(Q);
  }
};

/// Closed forms: R = k(C-k), S = Q = 0, P = k(k-1)/2 + (2C-k-K-1)(K-k)/2.
inline ComparisonCounts comparison_closed_form(std::size_t C, std::size_t k, std::size_t K) {
  ComparisonCounts c;
  c.R = k * (C - k);
  c.P = (k * (k - 1) + (2 * C - k - K - 1) * (K - k)) / 2;
  c.pairs = C * (C - 1);
  return c;
}

/// Enumerates ordered pairs of ground-truth ranks (r_a, r_b), r_a != r_b, and
/// compares AUTKC accuracy at K with top-k accuracy.
inline ComparisonCounts enumerate_comparison(std::size_t C, std::size_t k, std::size_t K) {
  if (C < 2) throw std::invalid_argument("C must be at least 2");
  if (!(1 <= k && k < K && K <= C))
    throw std::invalid_argument("need 1 <= k < K <= C (got k=" + std::to_string(k) +
                                ", K=" + std::to_string(K) + ", C=" + std::to_string(C) + ")");
  // Both measures depend on the rank only; compare integer numerators.
  auto f = [K](std::size_t r) { return K - std::min(r - 1, K); };
  auto g = [k](std::size_t r) { return r <= k ? 1u : 0u; };
  ComparisonCounts c;
  for (std::size_t a = 1; a <= C; ++a) {
    for (std::size_t b = 1; b <= C; ++b) {
      if (a == b) continue;
      ++c.pairs;
      const auto fa = f(a), fb = f(b);
      const auto ga = g(a), gb = g(b);
      if (fa > fb && ga > gb) ++c.R;
      else if (fa > fb && ga < gb) ++c.S;
      else if (fa > fb && ga == gb) ++c.P;
      else if (ga > gb && fa == fb) ++c.Q;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct MetricReport {
  std::size_t K = 0;
  double autkc_up = 0.0;
  TopKCurve curve;
  std::size_t n = 0;
};

inline MetricReport metric_report(const ScoredSet& set, std::size_t K, std::size_t k_max) {
  return MetricReport{K, autkc_up(set, K), topk_curve(set, k_max), set.size()};
}

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  return {{"K", r.K}, {"autkc_up", r.autkc_up}, {"topk_curve", r.curve.acc}, {"n", r.n}};
}

inline nlohmann::ordered_json to_json(const ComparisonCounts& c) {
  nlohmann::ordered_json j{{"R", c.R}, {"S", c.S}, {"P", c.P}, {"Q", c.Q}, {"pairs", c.pairs}};
  j["degree_of_consistency"] = c.degree_of_consistency();
  const double d = c.degree_of_discriminancy();
  if (std::isinf(d)) j["degree_of_discriminancy"] = "inf";
  else j["degree_of_discriminancy"] = d;
  return j;
}

}  // namespace autkc
