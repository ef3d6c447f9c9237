#pragma once

// Trainable objectives: the AUTKC surrogate family, the prior top-k losses,
// cross-entropy and the multiclass hinge, each with an analytic (sub)gradient
// w.r.t. the raw scores.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "autkc/ranking.hpp"

namespace autkc {

// ---------------------------------------------------------------------------
// Scalar surrogates
// ---------------------------------------------------------------------------

enum class Surrogate { Hinge, Square, Exp, Logit };

struct ScalarLoss {
  double value;
  double derivative;
};

/// Surrogate for the 0-1 indicator [t <= 0]. The hinge uses subgradient 0 at t = 1.
inline ScalarLoss scalar_surrogate(Surrogate kind, double t) {
  switch (kind) {
    case Surrogate::Hinge:
      return t < 1.0 ? ScalarLoss{1.0 - t, -1.0} : ScalarLoss{0.0, 0.0};
    case Surrogate::Square:
      return {(1.0 - t) * (1.0 - t), -2.0 * (1.0 - t)};
    case Surrogate::Exp: {
      const double e = std::exp(-t);
      return {e, -e};
    }
    case Surrogate::Logit: {
      // log(1 + e^{-t}) and its derivative -1 / (1 + e^{t}), both overflow-safe.
      const double value = t > 0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
      const double derivative = t > 0 ? -std::exp(-t) / (1.0 + std::exp(-t)) : -1.0 / (1.0 + std::exp(t));
      return {value, derivative};
    }
  }
  throw std::logic_error("unknown surrogate");
}

inline const char* to_string(Surrogate kind) {
  switch (kind) {
    case Surrogate::Hinge: return "hinge";
    case Surrogate::Square: return "square";
    case Surrogate::Exp: return "exp";
    case Surrogate::Logit: return "logit";
  }
  return "?";
}

inline Surrogate parse_surrogate(std::string_view name) {
  if (name == "hinge") return Surrogate::Hinge;
  if (name == "square" || name == "sq") return Surrogate::Square;
  if (name == "exp") return Surrogate::Exp;
  if (name == "logit") return Surrogate::Logit;
  throw std::invalid_argument("unknown surrogate '" + std::string(name) + "' (expected hinge|square|exp|logit)");
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

inline std::vector<double> softmax(std::span<const double> s) {
  const double m = *std::max_element(s.begin(), s.end());
  std::vector<double> out(s.size());
  double z = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) z += (out[i] = std::exp(s[i] - m));
  for (double& v : out) v /= z;
  return out;
}

/// Pulls a gradient w.r.t. softmax outputs u back to the raw scores:
/// (J^T g)_i = u_i (g_i - <u, g>).
inline std::vector<double> softmax_backward(std::span<const double> u, std::span<const double> grad_u) {
  double dot = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * grad_u[i];
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] * (grad_u[i] - dot);
  return out;
}

inline double log_sum_exp(std::span<const double> s) {
  const double m = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - m);
  return m + std::log(z);
}

// ---------------------------------------------------------------------------
// Loss specification
// ---------------------------------------------------------------------------

enum class LossFamily { CE, MCHinge, L1, L2, L3, L4, L5, TCE, AutkcHinge, AutkcSq, AutkcExp, AutkcLogit };

inline constexpr std::array<LossFamily, 12> kAllLossFamilies = {
    LossFamily::CE, LossFamily::MCHinge, LossFamily::L1,         LossFamily::L2,
    LossFamily::L3, LossFamily::L4,      LossFamily::L5,         LossFamily::TCE,
    LossFamily::AutkcHinge, LossFamily::AutkcSq, LossFamily::AutkcExp, LossFamily::AutkcLogit};

inline bool is_autkc(LossFamily f) {
  return f == LossFamily::AutkcHinge || f == LossFamily::AutkcSq || f == LossFamily::AutkcExp ||
         f == LossFamily::AutkcLogit;
}

inline bool takes_cutoff(LossFamily f) { return f != LossFamily::CE && f != LossFamily::MCHinge; }

inline const char* family_name(LossFamily f) {
  switch (f) {
    case LossFamily::CE: return "ce";
    case LossFamily::MCHinge: return "hinge";
    case LossFamily::L1: return "l1";
    case LossFamily::L2: return "l2";
    case LossFamily::L3: return "l3";
    case LossFamily::L4: return "l4";
    case LossFamily::L5: return "l5";
    case LossFamily::TCE: return "tce";
    case LossFamily::AutkcHinge: return "autkc-hinge";
    case LossFamily::AutkcSq: return "autkc-sq";
    case LossFamily::AutkcExp: return "autkc-exp";
    case LossFamily::AutkcLogit: return "autkc-logit";
  }
  return "?";
}

inline Surrogate autkc_surrogate(LossFamily f) {
  switch (f) {
    case LossFamily::AutkcHinge: return Surrogate::Hinge;
    case LossFamily::AutkcSq: return Surrogate::Square;
    case LossFamily::AutkcExp: return Surrogate::Exp;
    case LossFamily::AutkcLogit: return Surrogate::Logit;
    default: throw std::invalid_argument(std::string(family_name(f)) + " is not an AUTKC family");
  }
}

struct LossSpec {
  LossFamily family = LossFamily::CE;
  std::size_t cutoff = 0;  ///< k for top-k baselines, K for AUTKC families, 0 otherwise
  bool normalize = false;  ///< softmax applied before the loss

  static LossSpec make(LossFamily family, std::size_t cutoff = 0) {
    LossSpec spec{family, takes_cutoff(family) ? cutoff : 0, false};
    spec.normalize = family == LossFamily::AutkcSq || family == LossFamily::AutkcExp ||
                     family == LossFamily::AutkcLogit;
    if (takes_cutoff(family) && cutoff < 1)
      throw std::invalid_argument(std::string(family_name(family)) + " needs a cutoff >= 1");
    return spec;
  }

  std::string to_string() const {
    std::string out = family_name(family);
    if (takes_cutoff(family)) out += "@" + std::to_string(cutoff);
    return out;
  }

  /// Throws unless the cutoff fits a problem with C classes.
  void validate(std::size_t C) const {
    if (!takes_cutoff(family)) return;
    // L2, L3 and TCE only read s_[1..k]; the rest need a competitor at k+1 or outside y.
    const bool full_range = family == LossFamily::L2 || family == LossFamily::L3 || family == LossFamily::TCE;
    const std::size_t hi = full_range ? C : C - 1;
    if (cutoff < 1 || cutoff > hi)
      throw std::out_of_range(to_string() + ": cutoff must lie in [1, " + std::to_string(hi) + "] for C=" +
                              std::to_string(C));
  }
};

inline constexpr std::string_view kLossGrammar =
    "LOSS := NAME | NAME '@' CUTOFF; NAME := ce | hinge | l1 | l2 | l3 | l4 | l5 | tce | "
    "autkc-hinge | autkc-sq | autkc-exp | autkc-logit; CUTOFF := positive integer "
    "(required for l1-l5, tce and autkc-*, forbidden for ce and hinge)";

inline LossSpec parse_loss_spec(std::string_view text) {
  const auto at = text.find('@');
  const std::string_view name = text.substr(0, at);
  LossFamily family{};
  bool found = false;
  for (LossFamily f : kAllLossFamilies) {
    if (name == family_name(f)) {
      family = f;
      found = true;
    }
  }
  if (!found && name == "mchinge") {
    family = LossFamily::MCHinge;
    found = true;
  }
  if (!found) throw std::invalid_argument("unknown loss '" + std::string(text) + "'; " + std::string(kLossGrammar));
  if (!takes_cutoff(family)) {
    if (at != std::string_view::npos)
      throw std::invalid_argument("loss '" + std::string(name) + "' takes no cutoff; " + std::string(kLossGrammar));
    return LossSpec::make(family);
  }
  if (at == std::string_view::npos)
    throw std::invalid_argument("loss '" + std::string(name) + "' needs '@cutoff'; " + std::string(kLossGrammar));
  const std::string digits(text.substr(at + 1));
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
    throw std::invalid_argument("bad cutoff in '" + std::string(text) + "'; " + std::string(kLossGrammar));
  return LossSpec::make(family, std::stoul(digits));
}

// ---------------------------------------------------------------------------
// Losses with gradients
// ---------------------------------------------------------------------------

struct LossValueGrad {
  double value = 0.0;
  std::vector<double> grad;
};

/// L_K(s, y) = (1/K) sum_{k=1}^{K+1} l(u_y - u_[k]), u = softmax(s) when the
/// spec normalizes. The top-(K+1) set is frozen at the evaluation point; the
/// self term l(0) is kept.
inline LossValueGrad autkc_loss(const LossSpec& spec, std::span<const double> s, std::size_t y) {
  const Surrogate kind = autkc_surrogate(spec.family);
  detail::check_label(s, y);
  spec.validate(s.size());
  const std::size_t K = spec.cutoff;

  std::vector<double> u = spec.normalize ? softmax(s) : std::vector<double>(s.begin(), s.end());
  std::vector<double> grad_u(s.size(), 0.0);
  double total = 0.0;
  for (std::size_t j : top_m_indices(u, K + 1)) {
    const ScalarLoss l = scalar_surrogate(kind, u[y] - u[j]);
    total += l.value;
    grad_u[y] += l.derivative;
    grad_u[j] -= l.derivative;
  }
  const double inv_k = 1.0 / static_cast<double>(K);
  for (double& g : grad_u) g *= inv_k;

  LossValueGrad out;
  out.value = total * inv_k;
  out.grad = spec.normalize ? softmax_backward(u, grad_u) : std::move(grad_u);
  return out;
}

namespace detail {

/// Indices of the k greatest entries of s with y removed (ties by index).
inline std::vector<std::size_t> top_excluding(std::span<const double> s, std::size_t y, std::size_t k) {
  std::vector<std::size_t> idx = top_m_indices(s, std::min(k + 1, s.size()));
  idx.erase(std::remove(idx.begin(), idx.end(), y), idx.end());
  idx.resize(k);
  return idx;
}

}  // namespace detail

/// CE, multiclass hinge and the prior top-k surrogates L1-L5 and TCE.
inline LossValueGrad baseline_loss(const LossSpec& spec, std::span<const double> s, std::size_t y) {
  if (is_autkc(spec.family))
    throw std::invalid_argument(std::string(family_name(spec.family)) + " is not a baseline loss");
  detail::check_label(s, y);
  spec.validate(s.size());
  const std::size_t C = s.size();
  const std::size_t k = spec.cutoff;
  const double inv_k = k > 0 ? 1.0 / static_cast<double>(k) : 0.0;
  LossValueGrad out{0.0, std::vector<double>(C, 0.0)};
  auto& g = out.grad;

  switch (spec.family) {
    case LossFamily::CE: {
      const std::vector<double> p = softmax(s);
      out.value = log_sum_exp(s) - s[y];
      for (std::size_t j = 0; j < C; ++j) g[j] = p[j];
      g[y] -= 1.0;
      break;
    }
    case LossFamily::MCHinge: {
      const std::size_t j = detail::top_excluding(s, y, 1).front();
      const double v = 1.0 + s[j] - s[y];
      if (v > 0.0) {
        out.value = v;
        g[j] += 1.0;
        g[y] -= 1.0;
      }
      break;
    }
    case LossFamily::L1: {
      const std::size_t j = detail::top_excluding(s, y, k).back();
      const double v = 1.0 + s[j] - s[y];
      if (v > 0.0) {
        out.value = v;
        g[j] += 1.0;
        g[y] -= 1.0;
      }
      break;
    }
    case LossFamily::L2:
    case LossFamily::L3: {
      std::vector<double> shifted(s.begin(), s.end());
      for (std::size_t j = 0; j < C; ++j)
        if (j != y) shifted[j] += 1.0;
      const auto top = top_m_indices(shifted, k);
      if (spec.family == LossFamily::L2) {
        double mean = 0.0;
        for (std::size_t j : top) mean += shifted[j];
        const double v = mean * inv_k - s[y];
        if (v > 0.0) {
          out.value = v;
          for (std::size_t j : top) g[j] += inv_k;
          g[y] -= 1.0;
        }
      } else {
        for (std::size_t j : top) {
          const double v = shifted[j] - s[y];
          if (v > 0.0) {
            out.value += v * inv_k;
            g[j] += inv_k;
            g[y] -= inv_k;
          }
        }
      }
      break;
    }
    case LossFamily::L4: {
      const auto top = detail::top_excluding(s, y, k);
      double mean = 0.0;
      for (std::size_t j : top) mean += 1.0 + s[j];
      const double v = mean * inv_k - s[y];
      if (v > 0.0) {
        out.value = v;
        for (std::size_t j : top) g[j] += inv_k;
        g[y] -= 1.0;
      }
      break;
    }
    case LossFamily::L5: {
      const std::size_t j = top_m_indices(s, k + 1).back();
      const double v = 1.0 + s[j] - s[y];
      if (v > 0.0) {
        out.value = v;
        g[j] += 1.0;
        g[y] -= 1.0;
      }
      break;
    }
    case LossFamily::TCE: {
      // log(1 + sum_{j in top-k} exp(s_j - s_y)), shifted for stability.
      const auto top = top_m_indices(s, k);
      double m = 0.0;
      for (std::size_t j : top) m = std::max(m, s[j] - s[y]);
      double z = std::exp(-m);
      std::vector<double> w(top.size());
      for (std::size_t i = 0; i < top.size(); ++i) z += (w[i] = std::exp(s[top[i]] - s[y] - m));
      out.value = m + std::log(z);
      for (std::size_t i = 0; i < top.size(); ++i) {
        const double p = w[i] / z;
        g[top[i]] += p;
        g[y] -= p;
      }
      break;
    }
    default:
      throw std::logic_error("unhandled baseline family");
  }
  return out;
}

/// Dispatches to the AUTKC or baseline implementation.
inline LossValueGrad evaluate_loss(const LossSpec& spec, std::span<const double> s, std::size_t y) {
  return is_autkc(spec.family) ? autkc_loss(spec, s, y) : baseline_loss(spec, s, y);
}

// ---------------------------------------------------------------------------
// Empirical Lipschitz check on the normalized AUTKC losses
// ---------------------------------------------------------------------------

struct LipschitzPair {
  double l1;  ///< coefficient on ||u - u'||_2
  double l2;  ///< coefficient on |u_y - u'_y|
};

/// Constant pairs for the softmax-normalized square, exponential and logit
/// AUTKC losses.
inline LipschitzPair lipschitz_pair(LossFamily family, std::size_t K) {
  const double k = static_cast<double>(K);
  const double root = std::sqrt(2.0 * (k + 1.0));
  const double lin = std::numbers::sqrt2 * (k + 1.0);
  constexpr double e = std::numbers::e;
  switch (family) {
    case LossFamily::AutkcSq: return {2.0 * root / k, 2.0 * lin / k};
    case LossFamily::AutkcExp: return {e * root / (2.0 * k), e * lin / (2.0 * k)};
    case LossFamily::AutkcLogit: {
      const double denom = 2.0 * e * k * std::numbers::ln2;
      return {root / denom, lin / denom};
    }
    default:
      throw std::invalid_argument(std::string("no Lipschitz constant pair for ") + family_name(family) +
                                  " (covered: autkc-sq, autkc-exp, autkc-logit)");
  }
}

struct LipschitzReport {
  LossSpec spec;
  std::size_t num_classes = 0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  LipschitzPair bound{};
  double max_ratio = 0.0;      ///< right-hand side on softmax outputs; decides `pass`
  double max_ratio_raw = 0.0;  ///< right-hand side on raw scores, reported alongside
  bool pass = false;
};

namespace detail {

/// |L(s) - L(s')| less the rounding error of the two loss evaluations;
/// without the allowance near-one-hot softmax pairs compare noise with noise.
inline double lipschitz_lhs(const LossSpec& spec, std::span<const double> s, std::span<const double> s2,
                            std::size_t y) {
  const double a = autkc_loss(spec, s, y).value;
  const double b = autkc_loss(spec, s2, y).value;
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(a) + std::abs(b));
  return std::max(0.0, std::abs(a - b) - noise);
}

inline double bound_ratio(double lhs, const LipschitzPair& bound, std::span<const double> v,
                          std::span<const double> w, std::size_t y) {
  double norm = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) norm += (v[i] - w[i]) * (v[i] - w[i]);
  const double rhs = bound.l1 * std::sqrt(norm) + bound.l2 * std::abs(v[y] - w[y]);
  if (rhs == 0.0) return lhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return lhs / rhs;
}

}  // namespace detail

/// Ratio |L(s) - L(s')| / (l1 ||u - u'|| + l2 |u_y - u'_y|) on softmax outputs u; 0 when s == s'.
inline double lipschitz_ratio(const LossSpec& spec, const LipschitzPair& bound, std::span<const double> s,
                              std::span<const double> s2, std::size_t y) {
  return detail::bound_ratio(detail::lipschitz_lhs(spec, s, s2, y), bound, softmax(s), softmax(s2), y);
}

/// Same ratio with the right-hand side measured on the raw scores instead.
inline double lipschitz_ratio_raw(const LossSpec& spec, const LipschitzPair& bound, std::span<const double> s,
                                  std::span<const double> s2, std::size_t y) {
  return detail::bound_ratio(detail::lipschitz_lhs(spec, s, s2, y), bound, s, s2, y);
}

/// Samples score pairs and reports the largest observed LHS/RHS ratio. Half of
/// the pairs are independent draws, half are local perturbations, at several
/// score scales so that both flat and peaked softmax outputs are visited.
inline LipschitzReport check_lipschitz_pair(const LossSpec& spec, std::size_t num_classes, std::size_t trials,
                                            std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("trials must be positive");
  LipschitzReport report{spec, num_classes, trials, seed, lipschitz_pair(spec.family, spec.cutoff), 0.0, 0.0, false};
  spec.validate(num_classes);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> label(0, num_classes - 1);
  constexpr std::array<double, 4> kScales = {0.5, 2.0, 5.0, 10.0};
  constexpr std::array<double, 3> kSteps = {1e-1, 1e-3, 1e-6};
  std::vector<double> s(num_classes), s2(num_classes);
  for (std::size_t t = 0; t < trials; ++t) {
    const double scale = kScales[t % kScales.size()];
    for (double& v : s) v = scale * normal(rng);
    if (t % 2 == 0) {
      for (double& v : s2) v = scale * normal(rng);
    } else {
      const double step = kSteps[(t / 2) % kSteps.size()];
      for (std::size_t i = 0; i < num_classes; ++i) s2[i] = s[i] + step * normal(rng);
    }
    const std::size_t y = label(rng);
    report.max_ratio = std::max(report.max_ratio, lipschitz_ratio(spec, report.bound, s, s2, y));
    report.max_ratio_raw = std::max(report.max_ratio_raw, lipschitz_ratio_raw(spec, report.bound, s, s2, y));
  }
  report.pass = report.max_ratio <= 1.0;
  return report;
}

}  // namespace autkc
