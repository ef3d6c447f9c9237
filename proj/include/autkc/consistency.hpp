#pragma once

// Numerical and brute-force checks of the Bayes-optimality and consistency
// theory for AUTKC: exact conditional 0-1 risk over all class orders, the
// top-K ranking-preserving test, projected gradient descent on the boxed
// surrogate conditional risk, and the tied-score construction that beats
// every ranking-preserving score under the hinge surrogate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autkc/losses.hpp"
#include "autkc/ranking.hpp"
#include "autkc/rng.hpp"

namespace autkc {

/// Class order from rank 1 to rank C.
class RankOrder {
 public:
  explicit RankOrder(std::vector<std::size_t> perm) : perm_(std::move(perm)), rank_(perm_.size()) {
    std::vector<bool> seen(perm_.size(), false);
    for (std::size_t pos = 0; pos < perm_.size(); ++pos) {
      const std::size_t c = perm_[pos];
      if (c >= perm_.size() || seen[c]) throw std::invalid_argument("RankOrder is not a permutation");
      seen[c] = true;
      rank_[c] = pos + 1;
    }
  }

  static RankOrder identity(std::size_t C) {
    std::vector<std::size_t> p(C);
    std::iota(p.begin(), p.end(), std::size_t{0});
    return RankOrder(std::move(p));
  }

  /// Descending order of the given values, ties by index.
  static RankOrder by_descending(std::span<const double> values) { return RankOrder(argsort_descending(values)); }

  std::size_t size() const noexcept { return perm_.size(); }
  std::size_t rank_of(std::size_t cls) const { return rank_.at(cls); }
  std::size_t at_rank(std::size_t r) const { return perm_.at(r - 1); }
  const std::vector<std::size_t>& perm() const noexcept { return perm_; }

  bool operator==(const RankOrder& other) const { return perm_ == other.perm_; }

 private:
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> rank_;
};

// ---------------------------------------------------------------------------
// 0-1 conditional risk and Bayes optimality
// ---------------------------------------------------------------------------

/// (1/K) sum_y eta_y min(rank(y) - 1, K).
inline double conditional_risk_01(const RankOrder& order, const CondDist& eta, std::size_t K) {
  if (order.size() != eta.size()) throw std::invalid_argument("order and eta disagree on C");
  detail::check_cutoff(K, 1, eta.size() - 1, "K");
  double risk = 0.0;
  for (std::size_t y = 0; y < eta.size(); ++y)
    risk += eta[y] * static_cast<double>(std::min(order.rank_of(y) - 1, K));
  return risk / static_cast<double>(K);
}

/// Same risk for a score vector, with worst-case tie ranks.
inline double conditional_risk_01(std::span<const double> s, const CondDist& eta, std::size_t K) {
  if (s.size() != eta.size()) throw std::invalid_argument("scores and eta disagree on C");
  detail::check_cutoff(K, 1, eta.size() - 1, "K");
  double risk = 0.0;
  for (std::size_t y = 0; y < eta.size(); ++y)
    risk += eta[y] * static_cast<double>(std::min(worst_case_rank(s, y) - 1, K));
  return risk / static_cast<double>(K);
}

/// (1/K) eta_sorted . [0, 1, ..., K-1, K, ..., K].
inline double bayes_risk_01(const CondDist& eta, std::size_t K) {
  detail::check_cutoff(K, 1, eta.size() - 1, "K");
  std::vector<double> sorted(eta.probs().begin(), eta.probs().end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double risk = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) risk += sorted[j] * static_cast<double>(std::min(j, K));
  return risk / static_cast<double>(K);
}

/// True iff the first K positions of the order are eta's top-K classes in eta order.
inline bool is_rp(const RankOrder& order, const CondDist& eta, std::size_t K) {
  const RankOrder ideal = RankOrder::by_descending(eta);
  for (std::size_t r = 1; r <= std::min(K, eta.size()); ++r)
    if (order.at_rank(r) != ideal.at_rank(r)) return false;
  return true;
}

/// Top-K ranking preservation of a score vector: every class a among eta's
/// top-K must beat every class b with eta_b < eta_a by more than gap_tol.
inline bool is_rp(std::span<const double> s, const CondDist& eta, std::size_t K, double gap_tol = 1e-6) {
  if (s.size() != eta.size()) throw std::invalid_argument("scores and eta disagree on C");
  const RankOrder ideal = RankOrder::by_descending(eta);
  const std::size_t top = std::min(K, eta.size());
  for (std::size_t r = 1; r <= top; ++r) {
    const std::size_t a = ideal.at_rank(r);
    for (std::size_t b = 0; b < s.size(); ++b)
      if (eta[b] < eta[a] && !(s[a] > s[b] + gap_tol)) return false;
  }
  return true;
}

inline constexpr std::size_t kMaxEnumerationClasses = 8;

struct BayesSet {
  double min_risk = 0.0;
  std::vector<RankOrder> minimizers;
  std::size_t orders_examined = 0;
};

/// Exhaustive argmin of the conditional 0-1 risk over all C! class orders.
/// Orders within 1e-12 of the minimum are kept.
inline BayesSet brute_force_bayes(const CondDist& eta, std::size_t K) {
  const std::size_t C = eta.size();
  if (C > kMaxEnumerationClasses)
    throw std::invalid_argument("brute-force enumeration supports C <= " + std::to_string(kMaxEnumerationClasses) +
                                " (got " + std::to_string(C) + ")");
  detail::check_cutoff(K, 1, C - 1, "K");
  std::vector<std::size_t> perm(C);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::pair<double, std::vector<std::size_t>>> all;
  double best = std::numeric_limits<double>::infinity();
  do {
    const double r = conditional_risk_01(RankOrder(perm), eta, K);
    best = std::min(best, r);
    all.emplace_back(r, perm);
  } while (std::next_permutation(perm.begin(), perm.end()));

  BayesSet out{best, {}, all.size()};
  for (auto& [r, p] : all)
    if (r <= best + 1e-12) out.minimizers.emplace_back(std::move(p));
  return out;
}

/// Positive random weights normalized to the simplex, redrawn until every
/// pairwise gap is at least min_gap.
template <class Rng>
CondDist random_eta(std::size_t C, Rng& rng, double min_gap = 1e-4) {
  std::exponential_distribution<double> expo(1.0);
  for (;;) {
    std::vector<double> p(C);
    double total = 0.0;
    for (double& v : p) total += (v = expo(rng));
    for (double& v : p) v /= total;
    std::vector<double> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    bool ok = sorted.front() > 0.0;
    for (std::size_t i = 1; ok && i < C; ++i) ok = sorted[i] - sorted[i - 1] >= min_gap;
    if (ok) return CondDist(std::move(p));
  }
}

// ---------------------------------------------------------------------------
// Surrogate conditional risk on raw, box-constrained scores
// ---------------------------------------------------------------------------

/// R(s) = sum_y eta_y (1/K) sum_{k<=K+1} l(s_y - s_[k]) and its (sub)gradient.
inline LossValueGrad surrogate_conditional_risk(Surrogate kind, std::span<const double> s, const CondDist& eta,
                                                std::size_t K) {
  const std::size_t C = s.size();
  if (eta.size() != C) throw std::invalid_argument("scores and eta disagree on C");
  detail::check_cutoff(K, 1, C - 1, "K");
  const auto top = top_m_indices(s, K + 1);
  const double inv_k = 1.0 / static_cast<double>(K);
  LossValueGrad out{0.0, std::vector<double>(C, 0.0)};
  for (std::size_t y = 0; y < C; ++y) {
    for (std::size_t j : top) {
      const ScalarLoss l = scalar_surrogate(kind, s[y] - s[j]);
      const double w = eta[y] * inv_k;
      out.value += w * l.value;
      out.grad[y] += w * l.derivative;
      out.grad[j] -= w * l.derivative;
    }
  }
  return out;
}

struct PgdOptions {
  std::size_t restarts = 10;
  std::size_t steps = 5000;
  double step_size = 0.05;
  double decay = 0.5;
  std::size_t decay_every = 1000;
  double lo = 0.0;
  double hi = 1.0;
};

struct SurrogateMinimum {
  std::vector<double> scores;
  double risk = std::numeric_limits<double>::infinity();
  std::size_t restart = 0;
};

/// Projected gradient descent from a given start; returns the best iterate.
inline SurrogateMinimum pgd_from(Surrogate kind, const CondDist& eta, std::size_t K, std::vector<double> s,
                                 const PgdOptions& opt) {
  SurrogateMinimum best{s, std::numeric_limits<double>::infinity(), 0};
  double step = opt.step_size;
  for (std::size_t t = 0; t <= opt.steps; ++t) {
    const LossValueGrad r = surrogate_conditional_risk(kind, s, eta, K);
    if (!std::isfinite(r.value)) return best;  // diverged: keep what we had
    if (r.value < best.risk) {
      best.risk = r.value;
      best.scores = s;
    }
    if (t == opt.steps) break;
    if (t > 0 && opt.decay_every > 0 && t % opt.decay_every == 0) step *= opt.decay;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::clamp(s[i] - step * r.grad[i], opt.lo, opt.hi);
  }
  return best;
}

/// Multi-start PGD over the box. Restart r draws its start from the stream
/// (seed, Restart, r); the lowest-risk restart wins, earliest on ties.
inline SurrogateMinimum minimize_surrogate_conditional_risk(Surrogate kind, const CondDist& eta, std::size_t K,
                                                            std::uint64_t seed, const PgdOptions& opt = {}) {
  detail::check_cutoff(K, 1, eta.size() - 1, "K");
  if (opt.restarts == 0) throw std::invalid_argument("need at least one restart");
  SurrogateMinimum best;
  for (std::size_t r = 0; r < opt.restarts; ++r) {
    auto rng = make_rng(seed, Stream::Restart, r);
    std::uniform_real_distribution<double> start(opt.lo, opt.hi);
    std::vector<double> s(eta.size());
    for (double& v : s) v = start(rng);
    SurrogateMinimum found = pgd_from(kind, eta, K, std::move(s), opt);
    found.restart = r;
    if (found.risk < best.risk) best = std::move(found);
  }
  return best;
}

/// Dense grid search over [lo, hi]^C with the given resolution (small C only).
inline SurrogateMinimum grid_minimize(Surrogate kind, const CondDist& eta, std::size_t K, double resolution = 0.02,
                                      double lo = 0.0, double hi = 1.0) {
  const std::size_t C = eta.size();
  if (C > 4) throw std::invalid_argument("grid search supports C <= 4");
  const auto points = static_cast<std::size_t>(std::llround((hi - lo) / resolution)) + 1;
  std::size_t total = 1;
  for (std::size_t i = 0; i < C; ++i) total *= points;
  SurrogateMinimum best;
  std::vector<double> s(C);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    for (std::size_t i = 0; i < C; ++i) {
      s[i] = lo + resolution * static_cast<double>(rest % points);
      rest /= points;
    }
    const double r = surrogate_conditional_risk(kind, s, eta, K).value;
    if (r < best.risk) {
      best.risk = r;
      best.scores = s;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Hinge counterexample
// ---------------------------------------------------------------------------

/// Tail mass sum_{k=K+2}^{C} eta_[k].
inline double tail_mass(const CondDist& eta, std::size_t K) {
  std::vector<double> sorted(eta.probs().begin(), eta.probs().end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double tail = 0.0;
  for (std::size_t j = K + 1; j < sorted.size(); ++j) tail += sorted[j];
  return tail;
}

inline bool hinge_condition_holds(const CondDist& eta, std::size_t K) {
  const double k = static_cast<double>(K);
  return eta.size() >= K + 3 && tail_mass(eta, K) > k / (k + 1.0);
}

class InfeasibleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Strictly decreasing eta over classes 0..C-1 whose tail beyond rank K+1
/// carries more than K/(K+1) of the mass. Requires C - K - 1 > K(K+1).
inline CondDist hinge_condition_eta(std::size_t C, std::size_t K) {
  if (K < 1 || C < K + 3 || C - K - 1 <= K * (K + 1))
    throw InfeasibleError("condition unsatisfiable: tail mass > K/(K+1) with strictly distinct eta needs "
                          "C - K - 1 > K(K+1) (got C=" + std::to_string(C) + ", K=" + std::to_string(K) + ")");
  const double k = static_cast<double>(K);
  const double head = k + 1.0;
  const double tail_n = static_cast<double>(C - K - 1);
  // Tail mass halfway between the condition and the largest mass that keeps
  // every head entry above every tail entry.
  const double tail = 0.5 * (k / (k + 1.0) + tail_n / (tail_n + head));
  const double head_base = (1.0 - tail) / head;
  const double tail_base = tail / tail_n;
  const double gap = (head_base - tail_base) / (4.0 * std::max(head, tail_n));
  std::vector<double> p(C);
  for (std::size_t i = 0; i <= K; ++i) p[i] = head_base + gap * (k / 2.0 - static_cast<double>(i));
  for (std::size_t i = 0; i < C - K - 1; ++i)
    p[K + 1 + i] = tail_base + gap * ((tail_n - 1.0) / 2.0 - static_cast<double>(i));
  return CondDist(std::move(p));
}

/// Score vector in eta order with equal spacing `gap` between consecutive ranks.
inline std::vector<double> rp_scores(const CondDist& eta, double gap) {
  const RankOrder order = RankOrder::by_descending(eta);
  std::vector<double> s(eta.size());
  for (std::size_t r = 1; r <= eta.size(); ++r) s[order.at_rank(r)] = -gap * static_cast<double>(r - 1);
  return s;
}

/// Sets eta's top K+1 classes to the score that s_rp gives its (K+1)-th class
/// and keeps every other coordinate.
inline std::vector<double> tie_top(std::span<const double> s_rp, const CondDist& eta, std::size_t K) {
  const RankOrder order = RankOrder::by_descending(eta);
  std::vector<double> s(s_rp.begin(), s_rp.end());
  const double level = s_rp[order.at_rank(K + 1)];
  for (std::size_t r = 1; r <= K + 1; ++r) s[order.at_rank(r)] = level;
  return s;
}

inline double hinge_risk(std::span<const double> s, const CondDist& eta, std::size_t K) {
  return surrogate_conditional_risk(Surrogate::Hinge, s, eta, K).value;
}

struct HingeCounterexample {
  CondDist eta;
  std::vector<double> s_tied;
  std::vector<double> s_rp;
  double risk_rp = 0.0;
  double risk_tied = 0.0;
  double risk_gap = 0.0;  ///< hinge risk of s_rp minus that of s_tied
};

inline HingeCounterexample hinge_counterexample(const CondDist& eta, std::size_t K, double gap) {
  if (!hinge_condition_holds(eta, K))
    throw InfeasibleError("condition unsatisfiable: tail mass " + std::to_string(tail_mass(eta, K)) +
                          " must exceed K/(K+1) with C >= K+3");
  HingeCounterexample out{eta, {}, rp_scores(eta, gap), 0.0, 0.0, 0.0};
  out.s_tied = tie_top(out.s_rp, eta, K);
  out.risk_rp = hinge_risk(out.s_rp, eta, K);
  out.risk_tied = hinge_risk(out.s_tied, eta, K);
  out.risk_gap = out.risk_rp - out.risk_tied;
  return out;
}

inline HingeCounterexample hinge_counterexample(std::size_t C, std::size_t K) {
  return hinge_counterexample(hinge_condition_eta(C, K), K, 1.0 / static_cast<double>(C - 1));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ConsistencyTrial {
  std::vector<double> eta;
  std::vector<double> minimizer;
  double risk = 0.0;      ///< surrogate conditional risk at the minimizer
  double excess_01 = 0.0; ///< 0-1 conditional risk above the Bayes risk
  bool rp = false;
  bool grid_checked = false;
};

struct ConsistencyReport {
  Surrogate family = Surrogate::Square;
  std::size_t C = 0;
  std::size_t K = 0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  double gap_tol = 1e-6;
  double rp_success_rate = 0.0;
  double worst_risk_gap = 0.0;
  std::vector<ConsistencyTrial> records;
  std::optional<HingeCounterexample> counterexample;
};

/// One seeded trial: PGD on the boxed surrogate risk, then the RP test. For
/// C <= 4 a failing minimizer is re-examined with a 0.02 grid search and PGD
/// restarted from the grid optimum before the failure is accepted.
inline ConsistencyTrial consistency_trial(Surrogate kind, const CondDist& eta, std::size_t K, std::uint64_t seed,
                                          double gap_tol = 1e-6, const PgdOptions& opt = {}) {
  SurrogateMinimum m = minimize_surrogate_conditional_risk(kind, eta, K, seed, opt);
  ConsistencyTrial trial;
  trial.eta.assign(eta.probs().begin(), eta.probs().end());
  trial.rp = is_rp(m.scores, eta, K, gap_tol);
  if (!trial.rp && eta.size() <= 4) {
    trial.grid_checked = true;
    const SurrogateMinimum grid = grid_minimize(kind, eta, K);
    SurrogateMinimum refined = pgd_from(kind, eta, K, grid.scores, opt);
    if (refined.risk < m.risk) m = std::move(refined);
    trial.rp = is_rp(m.scores, eta, K, gap_tol);
  }
  trial.minimizer = m.scores;
  trial.risk = m.risk;
  trial.excess_01 = conditional_risk_01(m.scores, eta, K) - bayes_risk_01(eta, K);
  return trial;
}

/// Random-eta consistency study for one surrogate; eta for trial t comes from
/// stream (seed, EtaDraw, t) and its PGD restarts from seed' = derive(seed, Restart, t).
inline ConsistencyReport run_consistency(Surrogate kind, std::size_t C, std::size_t K, std::size_t trials,
                                         std::uint64_t seed, double gap_tol = 1e-6, const PgdOptions& opt = {}) {
  if (trials == 0) throw std::invalid_argument("trials must be positive");
  detail::check_cutoff(K, 1, C - 1, "K");
  ConsistencyReport report;
  report.family = kind;
  report.C = C;
  report.K = K;
  report.trials = trials;
  report.seed = seed;
  report.gap_tol = gap_tol;
  std::size_t passed = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    auto rng = make_rng(seed, Stream::EtaDraw, t);
    const CondDist eta = random_eta(C, rng);
    ConsistencyTrial trial = consistency_trial(kind, eta, K, derive_seed(seed, Stream::Restart, t), gap_tol, opt);
    passed += trial.rp ? 1 : 0;
    report.worst_risk_gap = std::max(report.worst_risk_gap, trial.excess_01);
    report.records.push_back(std::move(trial));
  }
  report.rp_success_rate = static_cast<double>(passed) / static_cast<double>(trials);
  return report;
}

/// Hinge study: the explicit construction plus `trials` random RP scores, each
/// compared with its own tied version, and one PGD run on the constructed eta.
/// worst_risk_gap holds the smallest tied-vs-RP hinge risk gap seen.
inline ConsistencyReport run_hinge_study(std::size_t C, std::size_t K, std::size_t trials, std::uint64_t seed,
                                         double gap_tol = 1e-6, const PgdOptions& opt = {}) {
  ConsistencyReport report;
  report.family = Surrogate::Hinge;
  report.C = C;
  report.K = K;
  report.trials = trials;
  report.seed = seed;
  report.gap_tol = gap_tol;
  report.counterexample = hinge_counterexample(C, K);
  const CondDist& eta = report.counterexample->eta;

  double smallest = report.counterexample->risk_gap;
  auto rng = make_rng(seed, Stream::ScoreSample);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const RankOrder order = RankOrder::by_descending(eta);
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> vals(C);
    const double scale = 0.1 + 3.0 * unit(rng);
    for (double& v : vals) v = scale * unit(rng);
    std::sort(vals.begin(), vals.end(), std::greater<>());
    if (std::adjacent_find(vals.begin(), vals.end()) != vals.end()) continue;
    std::vector<double> s(C);
    for (std::size_t r = 1; r <= C; ++r) s[order.at_rank(r)] = vals[r - 1];
    smallest = std::min(smallest, hinge_risk(s, eta, K) - hinge_risk(tie_top(s, eta, K), eta, K));
  }
  report.worst_risk_gap = smallest;

  ConsistencyTrial trial = consistency_trial(Surrogate::Hinge, eta, K, derive_seed(seed, Stream::Restart, 0),
                                             gap_tol, opt);
  report.rp_success_rate = trial.rp ? 1.0 : 0.0;
  report.records.push_back(std::move(trial));
  return report;
}

inline nlohmann::ordered_json to_json(const ConsistencyReport& r) {
  nlohmann::ordered_json j;
  j["family"] = to_string(r.family);
  j["C"] = r.C;
  j["K"] = r.K;
  j["trials"] = r.trials;
  j["seed"] = r.seed;
  j["gap_tol"] = r.gap_tol;
  j["rp_success_rate"] = r.rp_success_rate;
  j["worst_risk_gap"] = r.worst_risk_gap;
  if (r.counterexample) {
    const auto& c = *r.counterexample;
    j["counterexample"] = {{"eta", c.eta.probs()},      {"tail_mass", tail_mass(c.eta, r.K)},
                           {"s_rp", c.s_rp},            {"s_tied", c.s_tied},
                           {"risk_rp", c.risk_rp},      {"risk_tied", c.risk_tied},
                           {"risk_gap", c.risk_gap}};
  }
  auto& records = j["records"] = nlohmann::ordered_json::array();
  for (const auto& t : r.records)
    records.push_back({{"eta", t.eta},
                       {"minimizer", t.minimizer},
                       {"risk", t.risk},
                       {"excess_01", t.excess_01},
                       {"rp", t.rp},
                       {"grid_checked", t.grid_checked}});
  return j;
}

}  // namespace autkc
