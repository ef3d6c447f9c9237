#pragma once

// Desk-scale empirical risk minimization: synthetic ambiguous-label data with
// a known conditional distribution, linear / MLP score functions, mini-batch
// SGD with Nesterov momentum, CE warm-up, and per-epoch evaluation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autkc/consistency.hpp"
#include "autkc/losses.hpp"
#include "autkc/metrics.hpp"
#include "autkc/ranking.hpp"
#include "autkc/rng.hpp"

namespace autkc {

struct LabeledSample {
  std::vector<double> x;
  std::size_t y = 0;
  std::optional<std::vector<double>> eta;  ///< known conditional distribution (synthetic data)
};

using Dataset = std::vector<LabeledSample>;

inline std::size_t feature_dim(const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("empty dataset");
  return data.front().x.size();
}

inline std::size_t infer_num_classes(const Dataset& data) {
  std::size_t C = 0;
  for (const auto& s : data) C = std::max(C, s.y + 1);
  for (const auto& s : data)
    if (s.eta) C = std::max(C, s.eta->size());
  return C;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Ground-truth linear model W* (C x d) drawn from N(0,1); x ~ N(0, I_d);
/// eta(x) = softmax(W* x / tau); y ~ eta(x). A draw whose logits are closer
/// than 1e-6 (or whose eta has exact duplicates) is redrawn, so every stored
/// eta is strictly ordered.
inline Dataset generate_synthetic(std::size_t C, std::size_t d, std::size_t n, double tau, std::uint64_t seed) {
  if (C < 2 || d < 1 || n < 1) throw std::invalid_argument("need C >= 2, d >= 1, n >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);

  auto weight_rng = make_rng(seed, Stream::DataWeights);
  std::vector<double> w(C * d);
  for (double& v : w) v = normal(weight_rng);

  auto feature_rng = make_rng(seed, Stream::DataFeatures);
  auto label_rng = make_rng(seed, Stream::DataLabels);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Dataset data;
  data.reserve(n);
  std::vector<double> logits(C);
  for (std::size_t i = 0; i < n; ++i) {
    LabeledSample sample;
    sample.x.resize(d);
    std::vector<double> eta;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw std::runtime_error("could not draw a tie-free eta in 1000 attempts (tau too small: softmax underflows)");
      for (double& v : sample.x) v = normal(feature_rng);
      for (std::size_t c = 0; c < C; ++c) {
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) z += w[c * d + j] * sample.x[j];
        logits[c] = z / tau;
      }
      std::vector<double> sorted = logits;
      std::sort(sorted.begin(), sorted.end());
      bool separated = true;
      for (std::size_t c = 1; c < C && separated; ++c) separated = sorted[c] - sorted[c - 1] >= 1e-6;
      if (!separated) continue;
      eta = softmax(logits);
      std::vector<double> sorted_eta = eta;
      std::sort(sorted_eta.begin(), sorted_eta.end());
      if (std::adjacent_find(sorted_eta.begin(), sorted_eta.end()) == sorted_eta.end()) break;
    }
    // Inverse-CDF draw of y.
    const double u = unit(label_rng);
    double cum = 0.0;
    sample.y = C - 1;
    for (std::size_t c = 0; c < C; ++c) {
      cum += eta[c];
      if (u < cum) {
        sample.y = c;
        break;
      }
    }
    sample.eta = std::move(eta);
    data.push_back(std::move(sample));
  }
  return data;
}

/// Seeded shuffle followed by a head/tail split; the tail holds `fraction` of the data.
inline std::pair<Dataset, Dataset> split_holdout(Dataset data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("holdout fraction must be in (0,1)");
  auto rng = make_rng(seed, Stream::SplitShuffle);
  std::shuffle(data.begin(), data.end(), rng);
  const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  Dataset tail(std::make_move_iterator(data.end() - static_cast<std::ptrdiff_t>(held)),
               std::make_move_iterator(data.end()));
  data.resize(data.size() - held);
  return {std::move(data), std::move(tail)};
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline bool parse_double(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  try {
    std::size_t used = 0;
    out = std::stod(cell, &used);
    return used == cell.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

inline bool parse_label(const std::string& cell, std::size_t& out) {
  if (cell.empty() || !std::all_of(cell.begin(), cell.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return false;
  try {
    out = std::stoul(cell);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace detail

/// Reads `f0,...,f{d-1},label` rows (header required). C is inferred as max label + 1.
inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header row");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header.back() != "label")
    throw ParseError(path, 1, "header must be f0,...,f{d-1},label");
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j)
    if (header[j] != "f" + std::to_string(j)) throw ParseError(path, 1, "expected column f" + std::to_string(j));

  Dataset data;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != d + 1)
      throw ParseError(path, lineno, "expected " + std::to_string(d + 1) + " columns, got " + std::to_string(cells.size()));
    LabeledSample s;
    s.x.resize(d);
    for (std::size_t j = 0; j < d; ++j)
      if (!detail::parse_double(cells[j], s.x[j]))
        throw ParseError(path, lineno, "non-numeric feature '" + cells[j] + "' in column f" + std::to_string(j));
    if (!detail::parse_label(cells[d], s.y))
      throw ParseError(path, lineno, "label '" + cells[d] + "' is not a non-negative integer");
    data.push_back(std::move(s));
  }
  if (data.empty()) throw ParseError(path, lineno, "no data rows");
  if (infer_num_classes(data) < 2) throw ParseError(path, lineno, "need at least 2 classes");
  return data;
}

inline void save_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::size_t d = feature_dim(data);
  for (std::size_t j = 0; j < d; ++j) out << 'f' << j << ',';
  out << "label\n";
  out.precision(17);
  for (const auto& s : data) {
    for (double v : s.x) out << v << ',';
    out << s.y << '\n';
  }
}

/// Scores file: one row per sample, C score columns then an integer label.
/// A first row that does not parse as numbers is treated as a header.
inline ScoredSet load_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  ScoredSet set;
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() < 3) throw ParseError(path, lineno, "need at least 2 score columns and a label");
    row.assign(cells.size() - 1, 0.0);
    bool numeric = true;
    for (std::size_t j = 0; j + 1 < cells.size() && numeric; ++j) numeric = detail::parse_double(cells[j], row[j]);
    if (!numeric && lineno == 1 && set.empty()) continue;  // header
    if (!numeric) throw ParseError(path, lineno, "non-numeric score");
    std::size_t label = 0;
    if (!detail::parse_label(cells.back(), label)) throw ParseError(path, lineno, "bad label '" + cells.back() + "'");
    if (!set.empty() && row.size() != set.num_classes())
      throw ParseError(path, lineno, "expected " + std::to_string(set.num_classes()) + " score columns");
    if (label >= row.size())
      throw ParseError(path, lineno, "label " + std::to_string(label) + " out of range for C=" + std::to_string(row.size()));
    set.add(row, label);
  }
  if (set.empty()) throw ParseError(path, lineno, "no data rows");
  return set;
}

/// Scores-only CSV plus a labels file with one integer per line.
inline ScoredSet load_scores_with_labels(const std::string& scores_path, const std::string& labels_path) {
  std::ifstream labels_in(labels_path);
  if (!labels_in) throw std::runtime_error("cannot open " + labels_path);
  std::vector<std::size_t> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(labels_in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    std::size_t y = 0;
    if (!detail::parse_label(line, y)) {
      if (lineno == 1) continue;  // header
      throw ParseError(labels_path, lineno, "bad label '" + line + "'");
    }
    labels.push_back(y);
  }

  std::ifstream in(scores_path);
  if (!in) throw std::runtime_error("cannot open " + scores_path);
  ScoredSet set;
  lineno = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    row.assign(cells.size(), 0.0);
    bool numeric = true;
    for (std::size_t j = 0; j < cells.size() && numeric; ++j) numeric = detail::parse_double(cells[j], row[j]);
    if (!numeric && lineno == 1) continue;
    if (!numeric) throw ParseError(scores_path, lineno, "non-numeric score");
    if (row.size() < 2) throw ParseError(scores_path, lineno, "need at least 2 score columns");
    if (!set.empty() && row.size() != set.num_classes())
      throw ParseError(scores_path, lineno, "expected " + std::to_string(set.num_classes()) + " score columns");
    if (set.size() >= labels.size())
      throw ParseError(scores_path, lineno, "more score rows than labels in " + labels_path);
    const std::size_t y = labels[set.size()];
    if (y >= row.size())
      throw ParseError(labels_path, set.size() + 1, "label " + std::to_string(y) + " out of range for C=" +
                                                        std::to_string(row.size()));
    set.add(row, y);
  }
  if (set.empty()) throw ParseError(scores_path, lineno, "no data rows");
  if (set.size() != labels.size())
    throw std::runtime_error(labels_path + ": " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(set.size()) + " score rows");
  return set;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

enum class ModelKind { Linear, Mlp };

/// Fully connected ReLU network stored as one flat parameter vector, layer by
/// layer: weights (out x in, row-major) followed by biases.
class Model {
 public:
  Model() = default;

  Model(std::size_t inputs, std::size_t classes, std::vector<std::size_t> hidden = {}) {
    if (inputs < 1 || classes < 2) throw std::invalid_argument("model needs d >= 1 and C >= 2");
    sizes_.push_back(inputs);
    for (std::size_t h : hidden) {
      if (h == 0) throw std::invalid_argument("hidden layer of size 0");
      sizes_.push_back(h);
    }
    sizes_.push_back(classes);
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(total);
      total += sizes_[l + 1] * (sizes_[l] + 1);
    }
    params_.assign(total, 0.0);
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void initialize(std::uint64_t seed) {
    auto rng = make_rng(seed, Stream::ModelInit);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      std::uniform_real_distribution<double> init(-bound, bound);
      const std::size_t count = sizes_[l + 1] * (sizes_[l] + 1);
      for (std::size_t i = 0; i < count; ++i) params_[offsets_[l] + i] = init(rng);
    }
  }

  ModelKind kind() const noexcept { return sizes_.size() > 2 ? ModelKind::Mlp : ModelKind::Linear; }
  std::size_t num_inputs() const noexcept { return sizes_.front(); }
  std::size_t num_classes() const noexcept { return sizes_.back(); }
  std::vector<std::size_t> hidden() const { return {sizes_.begin() + 1, sizes_.end() - 1}; }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  /// Activation buffers for one sample.
  struct Workspace {
    std::vector<std::vector<double>> act;    // act[0] = input, act.back() = scores
    std::vector<std::vector<double>> delta;  // gradient w.r.t. pre-activations
  };

  Workspace workspace() const {
    Workspace ws;
    for (std::size_t n : sizes_) {
      ws.act.emplace_back(n, 0.0);
      ws.delta.emplace_back(n, 0.0);
    }
    return ws;
  }

  std::span<const double> forward(std::span<const double> x, Workspace& ws) const {
    if (x.size() != num_inputs()) throw std::invalid_argument("feature dimension mismatch");
    std::copy(x.begin(), x.end(), ws.act[0].begin());
    const std::size_t layers = sizes_.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const double* w = params_.data() + offsets_[l];
      const double* b = w + out * in;
      const auto& a = ws.act[l];
      auto& z = ws.act[l + 1];
      for (std::size_t o = 0; o < out; ++o) {
        double sum = b[o];
        const double* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) sum += row[i] * a[i];
        z[o] = (l + 1 < layers) ? std::max(sum, 0.0) : sum;
      }
    }
    return ws.act.back();
  }

  /// Accumulates d(loss)/d(params) into grad given d(loss)/d(scores); forward
  /// must have been called on the same workspace.
  void backward(std::span<const double> grad_scores, Workspace& ws, std::span<double> grad) const {
    const std::size_t layers = sizes_.size() - 1;
    std::copy(grad_scores.begin(), grad_scores.end(), ws.delta[layers].begin());
    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const double* w = params_.data() + offsets_[l];
      double* gw = grad.data() + offsets_[l];
      double* gb = gw + out * in;
      const auto& a = ws.act[l];
      const auto& dz = ws.delta[l + 1];
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dz[o];
        if (g == 0.0) continue;
        double* row = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += g * a[i];
        gb[o] += g;
      }
      if (l == 0) break;
      auto& da = ws.delta[l];
      std::fill(da.begin(), da.end(), 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dz[o];
        if (g == 0.0) continue;
        const double* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) da[i] += g * row[i];
      }
      for (std::size_t i = 0; i < in; ++i)
        if (a[i] <= 0.0) da[i] = 0.0;  // ReLU
    }
  }

  std::vector<double> scores(std::span<const double> x) const {
    Workspace ws = workspace();
    const auto s = forward(x, ws);
    return {s.begin(), s.end()};
  }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  LossSpec loss = LossSpec::make(LossFamily::CE);
  std::vector<std::size_t> K_eval = {3, 5, 10};
  std::size_t k_max = 10;
  std::size_t epochs = 90;
  std::size_t warmup_epochs = 10;
  std::size_t batch_size = 128;
  double lr = 1e-2;
  double lr_decay_ratio = 0.1;
  std::size_t lr_decay_period = 30;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;

  void validate() const {
    if (warmup_epochs > epochs) throw std::invalid_argument("warm-up epochs exceed total epochs");
    if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (lr_decay_period < 1) throw std::invalid_argument("lr decay period must be >= 1");
    if (K_eval.empty()) throw std::invalid_argument("K_eval must not be empty");
  }

  /// Global epoch clock: the schedule does not restart after warm-up.
  double lr_at(std::size_t epoch) const {
    return lr * std::pow(lr_decay_ratio, static_cast<double>(epoch / lr_decay_period));
  }

  LossSpec loss_at(std::size_t epoch) const {
    return epoch < warmup_epochs ? LossSpec::make(LossFamily::CE) : loss;
  }
};

struct EvalReport {
  std::size_t n = 0;
  std::map<std::size_t, double> autkc_up;
  TopKCurve curve;
  std::map<std::size_t, double> rp_agreement;  ///< only when eta is known
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::string loss_family;
  double train_loss = 0.0;
  double lr = 0.0;
  EvalReport eval;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline ScoredSet score_dataset(const Model& model, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("empty dataset");
  ScoredSet set(model.num_classes());
  auto ws = model.workspace();
  for (const auto& s : data) set.add(model.forward(s.x, ws), s.y);
  return set;
}

/// AUTKC-up at each K, the top-k curve to k_max and, when every sample carries
/// eta, the fraction of samples whose scores are top-K ranking-preserving.
inline EvalReport evaluate_scores(const ScoredSet& set, const Dataset& data, std::span<const std::size_t> K_list,
                                  std::size_t k_max, double gap_tol = 1e-6) {
  if (set.empty()) throw std::invalid_argument("empty dataset");
  EvalReport report;
  report.n = set.size();
  const std::size_t C = set.num_classes();
  for (std::size_t K : K_list) report.autkc_up[K] = autkc_up(set, K);
  report.curve = topk_curve(set, std::min(k_max, C));
  const bool known = !data.empty() && std::all_of(data.begin(), data.end(), [](const auto& s) { return s.eta.has_value(); });
  if (known) {
    for (std::size_t K : K_list) {
      std::size_t agree = 0;
      for (std::size_t i = 0; i < set.size(); ++i)
        if (is_rp(set.scores(i), CondDist(*data[i].eta), K, gap_tol)) ++agree;
      report.rp_agreement[K] = static_cast<double>(agree) / static_cast<double>(set.size());
    }
  }
  return report;
}

inline EvalReport evaluate(const Model& model, const Dataset& data, std::span<const std::size_t> K_list,
                           std::size_t k_max, double gap_tol = 1e-6) {
  return evaluate_scores(score_dataset(model, data), data, K_list, k_max, gap_tol);
}

/// Mini-batch SGD with Nesterov momentum and coupled L2 weight decay:
/// g += wd * p;  v = mu * v + g;  p -= lr * (g + mu * v).
/// Epochs before warmup_epochs optimize CE; the batch order of epoch e comes
/// from stream (seed, EpochShuffle, e). Each epoch is evaluated on `holdout`.
inline TrainResult sgd_train(Model model, const Dataset& train, const Dataset& holdout, const ExperimentConfig& config) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("empty training set");
  const std::size_t C = model.num_classes();
  config.loss.validate(C);
  for (std::size_t K : config.K_eval) detail::check_cutoff(K, 1, C - 1, "K_eval");

  TrainResult result;
  const std::size_t P = model.params().size();
  std::vector<double> grad(P), velocity(P, 0.0);
  auto ws = model.workspace();
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const LossSpec loss = config.loss_at(epoch);
    const double lr = config.lr_at(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(config.seed, Stream::EpochShuffle, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(start + config.batch_size, order.size());
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const LabeledSample& s = train[order[b]];
        const auto scores = model.forward(s.x, ws);
        const LossValueGrad l = evaluate_loss(loss, scores, s.y);
        if (!std::isfinite(l.value))
          throw TrainingDiverged("non-finite " + loss.to_string() + " loss at epoch " + std::to_string(epoch) +
                                 " (lr " + std::to_string(lr) + " too high?)");
        loss_sum += l.value;
        model.backward(l.grad, ws, grad);
      }
      if (lr == 0.0) continue;
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      auto p = model.params();
      for (std::size_t i = 0; i < P; ++i) {
        const double g = grad[i] * inv_b + config.weight_decay * p[i];
        velocity[i] = config.momentum * velocity[i] + g;
        p[i] -= lr * (g + config.momentum * velocity[i]);
      }
    }
    for (double v : model.params())
      if (!std::isfinite(v))
        throw TrainingDiverged("non-finite weights after epoch " + std::to_string(epoch) + " (lr too high?)");

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_family = loss.to_string();
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.lr = lr;
    if (!holdout.empty()) rec.eval = evaluate(model, holdout, config.K_eval, config.k_max);
    result.history.push_back(std::move(rec));
  }
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  auto& autkc = j["autkc_up"] = nlohmann::ordered_json::object();
  for (const auto& [K, v] : r.autkc_up) autkc[std::to_string(K)] = v;
  j["topk"] = r.curve.acc;
  if (!r.rp_agreement.empty()) {
    auto& rp = j["rp_agreement"] = nlohmann::ordered_json::object();
    for (const auto& [K, v] : r.rp_agreement) rp[std::to_string(K)] = v;
  }
  return j;
}

inline nlohmann::ordered_json to_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["loss_family"] = r.loss_family;
  j["train_loss"] = r.train_loss;
  j["lr"] = r.lr;
  auto& autkc = j["autkc_up"] = nlohmann::ordered_json::object();
  for (const auto& [K, v] : r.eval.autkc_up) autkc[std::to_string(K)] = v;
  j["topk"] = r.eval.curve.acc;
  return j;
}

/// One JSON object per line, one line per epoch.
inline void write_history_jsonl(std::ostream& out, const std::vector<EpochRecord>& history) {
  for (const auto& rec : history) out << to_json(rec).dump() << '\n';
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  return {{"loss", c.loss.to_string()},
          {"normalize", c.loss.normalize},
          {"K_eval", c.K_eval},
          {"k_max", c.k_max},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"lr_decay_ratio", c.lr_decay_ratio},
          {"lr_decay_period", c.lr_decay_period},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed}};
}

}  // namespace autkc
