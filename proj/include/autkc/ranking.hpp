#pragma once

// Score vectors, conditional distributions and the worst-case tie ranking
// primitives. Ties are compared exactly; a tie involving the ground-truth
// label is always resolved against it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace autkc {

/// Length-C vector of finite class scores, C >= 2.
class ScoreVector {
 public:
  ScoreVector() = default;
  explicit ScoreVector(std::vector<double> values) : values_(std::move(values)) { validate(); }
  ScoreVector(std::initializer_list<double> values) : values_(values) { validate(); }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  operator std::span<const double>() const noexcept { return values_; }  // NOLINT

  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

 private:
  void validate() const {
    if (values_.size() < 2) throw std::invalid_argument("ScoreVector needs at least 2 classes");
    for (double v : values_)
      if (!std::isfinite(v)) throw std::invalid_argument("ScoreVector entries must be finite");
  }

  std::vector<double> values_;
};

/// Point of the probability simplex with pairwise distinct entries.
class CondDist {
 public:
  static constexpr double kSumTolerance = 1e-12;

  CondDist() = default;
  explicit CondDist(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) throw std::invalid_argument("CondDist needs at least 2 classes");
    double total = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("CondDist entries must lie in [0,1]");
      total += p;
    }
    if (std::abs(total - 1.0) > kSumTolerance)
      throw std::invalid_argument("CondDist entries must sum to 1 (got " + std::to_string(total) + ")");
    std::vector<double> sorted = probs_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw std::invalid_argument("CondDist entries must be pairwise distinct");
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }
  operator std::span<const double>() const noexcept { return probs_; }  // NOLINT

  /// Smallest absolute difference between two entries.
  double min_gap() const {
    std::vector<double> sorted = probs_;
    std::sort(sorted.begin(), sorted.end());
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < sorted.size(); ++i) gap = std::min(gap, sorted[i] - sorted[i - 1]);
    return gap;
  }

 private:
  std::vector<double> probs_;
};

namespace detail {

inline void check_label(std::span<const double> s, std::size_t y) {
  if (y >= s.size())
    throw std::out_of_range("label " + std::to_string(y) + " out of range for " +
                            std::to_string(s.size()) + " classes");
}

inline void check_cutoff(std::size_t k, std::size_t lo, std::size_t hi, const char* what) {
  if (k < lo || k > hi)
    throw std::out_of_range(std::string(what) + "=" + std::to_string(k) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

}  // namespace detail

/// Rank of y when every tie is broken against it: |{j : s_j >= s_y}|.
inline std::size_t worst_case_rank(std::span<const double> s, std::size_t y) {
  detail::check_label(s, y);
  const double sy = s[y];
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [sy](double v) { return v >= sy; }));
}

/// k-th greatest entry of s (1-based, duplicates retained).
inline double kth_largest(std::span<const double> s, std::size_t k) {
  detail::check_cutoff(k, 1, s.size(), "k");
  std::vector<double> buf(s.begin(), s.end());
  std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(k - 1), buf.end(),
                   std::greater<>());
  return buf[k - 1];
}

/// k-th greatest entry of s with entry y removed.
inline double kth_largest_excluding(std::span<const double> s, std::size_t y, std::size_t k) {
  detail::check_label(s, y);
  detail::check_cutoff(k, 1, s.size() - 1, "k");
  std::vector<double> buf;
  buf.reserve(s.size() - 1);
  for (std::size_t j = 0; j < s.size(); ++j)
    if (j != y) buf.push_back(s[j]);
  std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(k - 1), buf.end(),
                   std::greater<>());
  return buf[k - 1];
}

/// Indices of the m greatest entries in descending score order; equal scores
/// are ordered by ascending index.
inline std::vector<std::size_t> top_m_indices(std::span<const double> s, std::size_t m) {
  detail::check_cutoff(m, 1, s.size(), "m");
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto before = [&s](std::size_t a, std::size_t b) { return s[a] > s[b] || (s[a] == s[b] && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(), before);
  idx.resize(m);
  return idx;
}

/// Full descending order (ties by index); handy for RankOrder construction.
inline std::vector<std::size_t> argsort_descending(std::span<const double> s) {
  return top_m_indices(s, s.size());
}

}  // namespace autkc
