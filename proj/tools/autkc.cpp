// autkc: command-line front end for the metric, loss, consistency and training
// modules. Every command writes its artifacts plus a manifest.json into --out.
//
// Exit codes:
//   0  success, every internal check passed
//   1  runtime failure (unreadable or malformed input, training divergence, I/O)
//   2  usage error (bad flag values, unknown loss, infeasible construction)
//   3  a verification check failed (consistency, closed forms, Lipschitz bound)

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "autkc/consistency.hpp"
#include "autkc/losses.hpp"
#include "autkc/metrics.hpp"
#include "autkc/trainer.hpp"

#ifndef AUTKC_VERSION
#define AUTKC_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum ExitCode : int { kOk = 0, kRuntime = 1, kUsage = 2, kCheckFailed = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void usage_check(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Records what was run and where its outputs went; written last.
class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {}

  void output(const fs::path& p) { outputs_.push_back(p.string()); }

  void write(const fs::path& dir, const json& config, std::uint64_t seed) {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json j;
    j["command"] = command_;
    j["argv"] = argv_;
    j["config"] = config;
    j["seed"] = seed;
    j["tool_version"] = AUTKC_VERSION;
    j["outputs"] = outputs_;
    j["wall_clock_seconds"] = seconds;
    write_json(dir / "manifest.json", j);
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::vector<std::string> outputs_;
  std::chrono::steady_clock::time_point start_;
};

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

std::string curve_csv(const autkc::TopKCurve& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "k,topk_up\n";
  for (std::size_t k = 0; k < curve.acc.size(); ++k) os << k + 1 << ',' << curve.acc[k] << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string scores, labels, out = ".";
  std::size_t K = 0;
  std::size_t kmax = 0;
};

int run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  usage_check(a.K >= 1, "--K must be >= 1");
  const autkc::ScoredSet set =
      a.labels.empty() ? autkc::load_scores_csv(a.scores) : autkc::load_scores_with_labels(a.scores, a.labels);
  const std::size_t C = set.num_classes();
  usage_check(a.K <= C - 1, "--K must be in [1, " + std::to_string(C - 1) + "] for C=" + std::to_string(C));
  const std::size_t kmax = a.kmax == 0 ? C : a.kmax;
  usage_check(kmax <= C, "--kmax " + std::to_string(kmax) + " exceeds the number of classes C=" + std::to_string(C));

  Manifest manifest("eval", argv);
  const fs::path dir = prepare_out(a.out);
  const autkc::MetricReport report = autkc::metric_report(set, a.K, kmax);
  write_json(dir / "metrics.json", autkc::to_json(report));
  manifest.output(dir / "metrics.json");
  write_text(dir / "topk_curve.csv", curve_csv(report.curve));
  manifest.output(dir / "topk_curve.csv");
  manifest.write(dir, {{"scores", a.scores}, {"labels", a.labels}, {"K", a.K}, {"kmax", kmax}, {"C", C}}, 0);
  std::cout << "autkc_up@" << a.K << " = " << report.autkc_up << " over n=" << report.n << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Built-in defaults; a --config JSON file overrides these, flags override both.
json train_defaults() {
  return {{"loss", json::array({"autkc-exp"})},
          {"K", json::array({3, 5, 10})},
          {"kmax", nullptr},  // null: min(10, C)
          {"warmup", 10},
          {"epochs", 90},
          {"seeds", json::array({0})},
          {"lr", 1e-2},
          {"lr_decay_ratio", 0.1},
          {"lr_decay_period", 30},
          {"batch", 128},
          {"momentum", 0.9},
          {"weight_decay", 1e-4},
          {"model", "mlp"},
          {"hidden", json::array({64})},
          {"C", 20},
          {"d", 16},
          {"n_train", 5000},
          {"n_test", 2000},
          {"tau", 2.0},
          {"holdout", 0.2},
          {"train_csv", ""},
          {"test_csv", ""},
          {"baseline", ""}};
}

void merge_config(json& resolved, const json& overlay, const std::string& source) {
  usage_check(overlay.is_object(), source + ": config must be a JSON object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string target = key == "seed" ? "seeds" : key;
    usage_check(resolved.contains(target), source + ": unknown config key '" + key + "'");
    json v = value;
    // Scalars are accepted where lists are expected.
    if (resolved[target].is_array() && !v.is_array()) v = json::array({v});
    resolved[target] = v;
  }
}

/// "autkc-exp" without a cutoff takes the largest evaluation K.
autkc::LossSpec resolve_loss(const std::string& text, std::size_t default_cutoff) {
  try {
    return autkc::parse_loss_spec(text);
  } catch (const std::invalid_argument& first) {
    if (text.find('@') == std::string::npos) {
      try {
        return autkc::parse_loss_spec(text + "@" + std::to_string(default_cutoff));
      } catch (const std::invalid_argument&) {
      }
    }
    throw UsageError(first.what());
  }
}

struct TrainPoint {
  autkc::LossSpec loss;
  std::uint64_t seed = 0;
  fs::path dir;
};

struct TrainData {
  autkc::Dataset train, test;
  std::size_t C = 0, d = 0;
};

TrainData make_data(const json& cfg, std::uint64_t seed) {
  TrainData data;
  const std::string train_csv = cfg["train_csv"], test_csv = cfg["test_csv"];
  if (!train_csv.empty()) {
    usage_check(!test_csv.empty(), "train_csv requires test_csv");
    data.train = autkc::load_csv(train_csv);
    data.test = autkc::load_csv(test_csv);
    data.d = autkc::feature_dim(data.train);
    if (autkc::feature_dim(data.test) != data.d) throw std::runtime_error("train and test feature dimensions differ");
    data.C = std::max(autkc::infer_num_classes(data.train), autkc::infer_num_classes(data.test));
    return data;
  }
  data.C = cfg["C"];
  data.d = cfg["d"];
  const std::size_t n_train = cfg["n_train"], n_test = cfg["n_test"];
  usage_check(data.C >= 2 && data.d >= 1 && n_train >= 1 && n_test >= 1, "need C >= 2, d >= 1, n_train, n_test >= 1");
  autkc::Dataset all = autkc::generate_synthetic(data.C, data.d, n_train + n_test, cfg["tau"].get<double>(), seed);
  data.test.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(n_train)),
                   std::make_move_iterator(all.end()));
  all.resize(n_train);
  data.train = std::move(all);
  return data;
}

autkc::ExperimentConfig make_experiment(const json& cfg, const autkc::LossSpec& loss, std::uint64_t seed,
                                        std::size_t num_classes) {
  autkc::ExperimentConfig c;
  c.loss = loss;
  c.K_eval = cfg["K"].get<std::vector<std::size_t>>();
  c.k_max = cfg["kmax"].is_null() ? std::min<std::size_t>(10, num_classes) : cfg["kmax"].get<std::size_t>();
  c.epochs = cfg["epochs"];
  c.warmup_epochs = cfg["warmup"];
  c.batch_size = cfg["batch"];
  c.lr = cfg["lr"];
  c.lr_decay_ratio = cfg["lr_decay_ratio"];
  c.lr_decay_period = cfg["lr_decay_period"];
  c.momentum = cfg["momentum"];
  c.weight_decay = cfg["weight_decay"];
  c.seed = seed;
  return c;
}

/// One isolated training run: own data draw, own RNG streams, own directory.
json train_point(const json& cfg, const TrainPoint& p) {
  TrainData data = make_data(cfg, p.seed);
  const autkc::ExperimentConfig config = make_experiment(cfg, p.loss, p.seed, data.C);
  for (std::size_t K : config.K_eval)
    usage_check(K >= 1 && K <= data.C - 1, "--K values must lie in [1, " + std::to_string(data.C - 1) + "]");
  usage_check(config.k_max >= 1 && config.k_max <= data.C,
              "--kmax exceeds the number of classes C=" + std::to_string(data.C));
  usage_check(config.warmup_epochs <= config.epochs, "--warmup must not exceed --epochs");
  usage_check(config.lr > 0.0 || config.lr == 0.0, "--lr must be >= 0");
  try {
    config.loss.validate(data.C);
  } catch (const std::out_of_range& e) {
    throw UsageError(e.what());
  }

  auto [train, holdout] = autkc::split_holdout(std::move(data.train), cfg["holdout"].get<double>(), p.seed);
  const std::string model_kind = cfg["model"];
  usage_check(model_kind == "mlp" || model_kind == "linear", "--model must be mlp or linear");
  autkc::Model model(data.d, data.C,
                     model_kind == "mlp" ? cfg["hidden"].get<std::vector<std::size_t>>() : std::vector<std::size_t>{});
  model.initialize(p.seed);

  autkc::TrainResult result = autkc::sgd_train(std::move(model), train, holdout, config);
  const autkc::EvalReport final_eval = autkc::evaluate(result.model, data.test, config.K_eval, config.k_max);

  fs::create_directories(p.dir);
  std::ostringstream history;
  autkc::write_history_jsonl(history, result.history);
  write_text(p.dir / "history.jsonl", history.str());
  json report = autkc::to_json(final_eval);
  json out;
  out["loss"] = config.loss.to_string();
  out["seed"] = p.seed;
  out["test"] = report;
  write_json(p.dir / "report.json", out);
  write_text(p.dir / "topk_curve.csv", curve_csv(final_eval.curve));
  return out;
}

struct TrainArgs {
  std::string config_file, out = "train-out";
  std::vector<std::string> loss;
  std::vector<std::size_t> K;
  std::vector<std::uint64_t> seeds;
  std::size_t warmup = 0, epochs = 0, batch = 0, kmax = 0, C = 0, d = 0, n_train = 0, n_test = 0;
  double lr = 0, weight_decay = 0, momentum = 0, tau = 0;
  std::string model, train_csv, test_csv, baseline;
  std::vector<std::size_t> hidden;
  unsigned jobs = 1;
};

int run_train(const TrainArgs& a, const CLI::App& sub, const std::vector<std::string>& argv) {
  json cfg = train_defaults();
  if (!a.config_file.empty()) {
    std::ifstream in(a.config_file);
    if (!in) throw std::runtime_error("cannot open " + a.config_file);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(a.config_file + ": " + e.what());
    }
    merge_config(cfg, file, a.config_file);
  }
  auto given = [&](const std::string& flag) { return sub.get_option(flag)->count() > 0; };
  if (given("--loss")) cfg["loss"] = a.loss;
  if (given("--K")) cfg["K"] = a.K;
  if (given("--seed")) cfg["seeds"] = a.seeds;
  if (given("--warmup")) cfg["warmup"] = a.warmup;
  if (given("--epochs")) cfg["epochs"] = a.epochs;
  if (given("--batch")) cfg["batch"] = a.batch;
  if (given("--kmax")) cfg["kmax"] = a.kmax;
  if (given("--lr")) cfg["lr"] = a.lr;
  if (given("--weight-decay")) cfg["weight_decay"] = a.weight_decay;
  if (given("--momentum")) cfg["momentum"] = a.momentum;
  if (given("--model")) cfg["model"] = a.model;
  if (given("--hidden")) cfg["hidden"] = a.hidden;
  if (given("--C")) cfg["C"] = a.C;
  if (given("--d")) cfg["d"] = a.d;
  if (given("--n-train")) cfg["n_train"] = a.n_train;
  if (given("--n-test")) cfg["n_test"] = a.n_test;
  if (given("--tau")) cfg["tau"] = a.tau;
  if (given("--train-csv")) cfg["train_csv"] = a.train_csv;
  if (given("--test-csv")) cfg["test_csv"] = a.test_csv;
  if (given("--baseline")) cfg["baseline"] = a.baseline;

  std::vector<std::size_t> Ks;
  std::vector<std::string> loss_names;
  std::vector<std::uint64_t> seeds;
  try {
    Ks = cfg["K"].get<std::vector<std::size_t>>();
    loss_names = cfg["loss"].get<std::vector<std::string>>();
    seeds = cfg["seeds"].get<std::vector<std::uint64_t>>();
    (void)make_experiment(cfg, autkc::LossSpec{}, 0, 2);  // type check only
  } catch (const json::exception& e) {
    throw UsageError(std::string("config value has the wrong type: ") + e.what());
  }
  usage_check(!Ks.empty(), "--K needs at least one value");
  usage_check(std::all_of(Ks.begin(), Ks.end(), [](std::size_t K) { return K >= 1; }), "--K values must be >= 1");
  usage_check(!loss_names.empty() && !seeds.empty(), "need at least one loss and one seed");
  usage_check(cfg["batch"].get<std::size_t>() >= 1, "--batch must be >= 1");
  usage_check(cfg["warmup"].get<std::size_t>() <= cfg["epochs"].get<std::size_t>(), "--warmup must not exceed --epochs");
  usage_check(cfg["lr"].get<double>() >= 0.0, "--lr must be >= 0");
  usage_check(cfg["tau"].get<double>() > 0.0, "--tau must be positive");
  const std::size_t default_cutoff = *std::max_element(Ks.begin(), Ks.end());

  std::vector<autkc::LossSpec> losses;
  for (const auto& name : loss_names) losses.push_back(resolve_loss(name, default_cutoff));
  {
    std::set<std::string> unique;
    for (const auto& l : losses) usage_check(unique.insert(l.to_string()).second, "duplicate loss " + l.to_string());
  }

  Manifest manifest("train", argv);
  const fs::path dir = prepare_out(a.out);
  const bool single = losses.size() == 1 && seeds.size() == 1;
  std::vector<TrainPoint> points;
  for (const auto& l : losses)
    for (std::uint64_t s : seeds)
      points.push_back({l, s, single ? dir : dir / l.to_string() / ("seed-" + std::to_string(s))});

  // Fan out isolated runs; results are stored by point index so the merge is order-independent.
  std::vector<json> results(points.size());
  std::vector<std::exception_ptr> errors(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        results[i] = train_point(cfg, points[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(a.jobs, static_cast<unsigned>(points.size())));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (const auto& p : points) {
    for (const char* f : {"history.jsonl", "report.json", "topk_curve.csv"}) manifest.output(p.dir / f);
  }

  if (!single) {
    // Per-loss mean curves across seeds and the normalized top-k gain table.
    std::map<std::string, autkc::TopKCurve> mean_curves;
    json summary = json::array();
    for (std::size_t li = 0; li < losses.size(); ++li) {
      const std::string name = losses[li].to_string();
      autkc::TopKCurve mean;
      std::map<std::string, double> mean_autkc;
      for (std::size_t si = 0; si < seeds.size(); ++si) {
        const json& r = results[li * seeds.size() + si]["test"];
        const auto acc = r["topk"].get<std::vector<double>>();
        if (mean.acc.empty()) mean.acc.assign(acc.size(), 0.0);
        for (std::size_t k = 0; k < acc.size(); ++k) mean.acc[k] += acc[k] / static_cast<double>(seeds.size());
        for (const auto& [K, v] : r["autkc_up"].items()) mean_autkc[K] += v.get<double>() / static_cast<double>(seeds.size());
      }
      json entry;
      entry["loss"] = name;
      entry["seeds"] = seeds;
      entry["mean_autkc_up"] = json::object();
      for (std::size_t K : Ks) entry["mean_autkc_up"][std::to_string(K)] = mean_autkc[std::to_string(K)];
      entry["mean_topk"] = mean.acc;
      summary.push_back(entry);
      mean_curves[name] = std::move(mean);
    }
    write_json(dir / "summary.json", summary);
    manifest.output(dir / "summary.json");
    if (losses.size() > 1) {
      const std::string base_text = cfg["baseline"];
      const std::string base = base_text.empty() ? losses.front().to_string()
                                                 : resolve_loss(base_text, default_cutoff).to_string();
      usage_check(mean_curves.count(base) > 0, "baseline " + base + " is not among the trained losses");
      const autkc::NormalizedGain gain = autkc::normalized_gain(mean_curves, base);
      std::ostringstream os;
      os.precision(17);
      os << "loss,k,gain\n";
      for (const auto& [name, g] : gain.gains)
        for (std::size_t k = 0; k < g.size(); ++k) os << name << ',' << k + 1 << ',' << g[k] << '\n';
      write_text(dir / "normalized_gain.csv", os.str());
      manifest.output(dir / "normalized_gain.csv");
      if (gain.degenerate) std::cerr << "warning: normalized gain degenerate (zero G+ or G-); raw gains written\n";
    }
  }

  manifest.write(dir, cfg, seeds.front());
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::cout << points[i].loss.to_string() << " seed " << points[i].seed << ":";
    for (const auto& [K, v] : results[i]["test"]["autkc_up"].items()) std::cout << " autkc_up@" << K << '=' << v.get<double>();
    std::cout << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// consistency
// ---------------------------------------------------------------------------

struct ConsistencyArgs {
  std::string family, out = ".";
  std::size_t C = 0, K = 0, trials = 0;
  std::uint64_t seed = 0;
  double gap_tol = 1e-6;
};

int run_consistency_cmd(const ConsistencyArgs& a, const CLI::App& sub, const std::vector<std::string>& argv) {
  autkc::Surrogate kind{};
  try {
    kind = autkc::parse_surrogate(a.family);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  usage_check(a.C >= 2, "--C must be >= 2");
  usage_check(a.K >= 1 && a.K <= a.C - 1, "--K must be in [1, C-1]");
  const bool hinge = kind == autkc::Surrogate::Hinge;
  const std::size_t trials = sub.get_option("--trials")->count() > 0 ? a.trials : (hinge ? 1000 : 50);
  usage_check(hinge || trials >= 1, "--trials must be >= 1");

  Manifest manifest("consistency", argv);
  autkc::ConsistencyReport report;
  try {
    report = hinge ? autkc::run_hinge_study(a.C, a.K, trials, a.seed, a.gap_tol)
                   : autkc::run_consistency(kind, a.C, a.K, trials, a.seed, a.gap_tol);
  } catch (const autkc::InfeasibleError& e) {
    throw UsageError(e.what());
  }
  const fs::path dir = prepare_out(a.out);
  json j = autkc::to_json(report);
  bool ok;
  if (hinge) {
    ok = report.counterexample->risk_gap > 0.0 && report.worst_risk_gap > 0.0;
    j["check"] = "risk_gap > 0 for the construction and every sampled RP score";
    std::cout << "hinge risk_gap = " << report.counterexample->risk_gap
              << ", smallest sampled gap = " << report.worst_risk_gap
              << ", PGD minimizer RP: " << (report.rp_success_rate > 0 ? "yes" : "no") << '\n';
  } else {
    ok = report.rp_success_rate >= 0.95;
    j["check"] = "rp_success_rate >= 0.95";
    std::cout << autkc::to_string(kind) << " rp_success_rate = " << report.rp_success_rate << " over " << trials
              << " trials\n";
  }
  j["pass"] = ok;
  write_json(dir / "consistency.json", j);
  manifest.output(dir / "consistency.json");
  manifest.write(dir,
                 {{"family", autkc::to_string(kind)}, {"C", a.C}, {"K", a.K}, {"trials", trials},
                  {"seed", a.seed}, {"gap_tol", a.gap_tol}},
                 a.seed);
  return ok ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// compare-metrics
// ---------------------------------------------------------------------------

struct CompareArgs {
  std::size_t C = 0, k = 0, K = 0;
  bool sweep = false;
  std::string out = ".";
};

int run_compare(const CompareArgs& a, const std::vector<std::string>& argv) {
  usage_check(a.C >= 2, "--C must be >= 2");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (a.sweep) {
    for (std::size_t k = 1; k <= a.C; ++k)
      for (std::size_t K = k + 1; K <= a.C; ++K) pairs.emplace_back(k, K);
  } else {
    usage_check(a.k >= 1, "--k must be >= 1 (or pass --sweep)");
    usage_check(a.k < a.K, "--k must be smaller than --K: the comparison needs k < K");
    usage_check(a.K <= a.C, "--K must not exceed --C");
    pairs.emplace_back(a.k, a.K);
  }

  Manifest manifest("compare-metrics", argv);
  bool all_ok = true;
  json rows = json::array();
  for (const auto& [k, K] : pairs) {
    const autkc::ComparisonCounts got = autkc::enumerate_comparison(a.C, k, K);
    const autkc::ComparisonCounts want = autkc::comparison_closed_form(a.C, k, K);
    const bool ok = got.R == want.R && got.S == want.S && got.P == want.P && got.Q == want.Q &&
                    got.degree_of_consistency() == 1.0 && std::isinf(got.degree_of_discriminancy());
    all_ok = all_ok && ok;
    json row;
    row["C"] = a.C;
    row["k"] = k;
    row["K"] = K;
    row["counts"] = autkc::to_json(got);
    row["closed_form"] = autkc::to_json(want);
    row["closed_form_match"] = ok;
    rows.push_back(row);
    std::cout << "C=" << a.C << " k=" << k << " K=" << K << ": R=" << got.R << " S=" << got.S << " P=" << got.P
              << " Q=" << got.Q << (ok ? "" : "  MISMATCH") << '\n';
  }
  const fs::path dir = prepare_out(a.out);
  write_json(dir / "comparison.json", a.sweep ? rows : rows.front());
  manifest.output(dir / "comparison.json");
  manifest.write(dir, {{"C", a.C}, {"k", a.k}, {"K", a.K}, {"sweep", a.sweep}}, 0);
  return all_ok ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// lipschitz
// ---------------------------------------------------------------------------

struct LipschitzArgs {
  std::string family, out = ".";
  std::size_t C = 5, K = 0, trials = 10000;
  std::uint64_t seed = 0;
};

int run_lipschitz(const LipschitzArgs& a, const std::vector<std::string>& argv) {
  usage_check(a.trials >= 1, "--trials must be >= 1");
  usage_check(a.C >= 2, "--C must be >= 2");
  autkc::LossSpec spec;
  try {
    spec = a.K > 0 && a.family.find('@') == std::string::npos
               ? autkc::parse_loss_spec(a.family + "@" + std::to_string(a.K))
               : autkc::parse_loss_spec(a.family);
    (void)autkc::lipschitz_pair(spec.family, std::max<std::size_t>(spec.cutoff, 1));
    spec.validate(a.C);
  } catch (const std::logic_error& e) {
    throw UsageError(std::string(e.what()) + "; Lipschitz constant pairs exist only for the softmax-normalized "
                                             "AUTKC losses autkc-sq, autkc-exp and autkc-logit");
  }

  Manifest manifest("lipschitz", argv);
  const autkc::LipschitzReport r = autkc::check_lipschitz_pair(spec, a.C, a.trials, a.seed);
  const fs::path dir = prepare_out(a.out);
  json j;
  j["loss"] = spec.to_string();
  j["C"] = r.num_classes;
  j["trials"] = r.trials;
  j["seed"] = r.seed;
  j["bound_pair"] = {r.bound.l1, r.bound.l2};
  j["max_ratio"] = r.max_ratio;
  j["max_ratio_raw_scores"] = r.max_ratio_raw;
  j["pass"] = r.pass;
  write_json(dir / "lipschitz.json", j);
  manifest.output(dir / "lipschitz.json");
  manifest.write(dir, {{"loss", spec.to_string()}, {"C", a.C}, {"trials", a.trials}, {"seed", a.seed}}, a.seed);
  std::cout << spec.to_string() << " max ratio " << r.max_ratio << (r.pass ? " (within bound)" : " (BOUND VIOLATED)")
            << '\n';
  return r.pass ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"AUTKC metrics, losses, consistency checks and training"};
  app.set_version_flag("--version", AUTKC_VERSION);
  app.require_subcommand(1);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score a file of predictions with AUTKC-up and the top-k curve");
  eval->add_option("--scores", ev.scores, "CSV: C score columns then a label column (or scores only with --labels)")
      ->required();
  eval->add_option("--labels", ev.labels, "Optional labels file, one integer per line");
  eval->add_option("--K", ev.K, "AUTKC cutoff, 1 <= K <= C-1")->required();
  eval->add_option("--kmax", ev.kmax, "Length of the top-k curve (default C)");
  eval->add_option("--out", ev.out, "Output directory");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train on synthetic or CSV data and evaluate");
  train->add_option("--config", tr.config_file, "JSON config file; flags override it");
  train->add_option("--loss", tr.loss, std::string("Loss spec(s); ") + std::string(autkc::kLossGrammar));
  train->add_option("--K", tr.K, "Evaluation cutoffs (largest is the default loss cutoff)");
  train->add_option("--seed", tr.seeds, "Seed(s); several seeds form a sweep");
  train->add_option("--warmup", tr.warmup, "CE warm-up epochs");
  train->add_option("--epochs", tr.epochs, "Total epochs");
  train->add_option("--batch", tr.batch, "Mini-batch size");
  train->add_option("--kmax", tr.kmax, "Top-k curve length");
  train->add_option("--lr", tr.lr, "Initial learning rate");
  train->add_option("--weight-decay", tr.weight_decay, "L2 weight decay");
  train->add_option("--momentum", tr.momentum, "Nesterov momentum");
  train->add_option("--model", tr.model, "mlp or linear");
  train->add_option("--hidden", tr.hidden, "MLP hidden layer sizes");
  train->add_option("--C", tr.C, "Synthetic: number of classes");
  train->add_option("--d", tr.d, "Synthetic: feature dimension");
  train->add_option("--n-train", tr.n_train, "Synthetic: training samples");
  train->add_option("--n-test", tr.n_test, "Synthetic: test samples");
  train->add_option("--tau", tr.tau, "Synthetic: softmax temperature");
  train->add_option("--train-csv", tr.train_csv, "Training CSV (f0,...,label) instead of synthetic data");
  train->add_option("--test-csv", tr.test_csv, "Test CSV");
  train->add_option("--baseline", tr.baseline, "Baseline loss for the normalized gain table");
  train->add_option("--jobs", tr.jobs, "Parallel workers for sweeps");
  train->add_option("--out", tr.out, "Output directory");

  ConsistencyArgs co;
  auto* cons = app.add_subcommand("consistency", "Check RP minimizers of the conditional surrogate risk");
  cons->add_option("--family", co.family, "square | exp | logit | hinge")->required();
  cons->add_option("--C", co.C, "Number of classes")->required();
  cons->add_option("--K", co.K, "Cutoff")->required();
  cons->add_option("--trials", co.trials, "Random eta draws (hinge: sampled RP scores); default 50 / 1000");
  cons->add_option("--seed", co.seed, "Seed");
  cons->add_option("--gap-tol", co.gap_tol, "Strict-gap tolerance for the RP test");
  cons->add_option("--out", co.out, "Output directory");

  CompareArgs cm;
  auto* cmp = app.add_subcommand("compare-metrics", "Pair-count comparison of AUTKC against top-k accuracy");
  cmp->add_option("--C", cm.C, "Number of classes")->required();
  cmp->add_option("--k", cm.k, "Top-k cutoff");
  cmp->add_option("--K", cm.K, "AUTKC cutoff (k < K <= C)");
  cmp->add_flag("--sweep", cm.sweep, "Check every 1 <= k < K <= C");
  cmp->add_option("--out", cm.out, "Output directory");

  LipschitzArgs li;
  auto* lip = app.add_subcommand("lipschitz", "Empirically check a Lipschitz constant pair");
  lip->add_option("--family", li.family, "autkc-sq@K | autkc-exp@K | autkc-logit@K")->required();
  lip->add_option("--C", li.C, "Number of classes");
  lip->add_option("--K", li.K, "Cutoff when --family has none");
  lip->add_option("--trials", li.trials, "Sampled pairs");
  lip->add_option("--seed", li.seed, "Seed");
  lip->add_option("--out", li.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*eval) return run_eval(ev, args);
    if (*train) return run_train(tr, *train, args);
    if (*cons) return run_consistency_cmd(co, *cons, args);
    if (*cmp) return run_compare(cm, args);
    if (*lip) return run_lipschitz(li, args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
