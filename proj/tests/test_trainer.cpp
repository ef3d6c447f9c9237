#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "autkc/trainer.hpp"

using namespace autkc;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "autkc_trainer_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_file(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

ExperimentConfig small_config(const std::string& loss) {
  ExperimentConfig c;
  c.loss = parse_loss_spec(loss);
  c.K_eval = {1, 2};
  c.k_max = 5;
  c.epochs = 6;
  c.warmup_epochs = 2;
  c.batch_size = 32;
  c.lr = 0.05;
  c.lr_decay_period = 3;
  c.seed = 3;
  return c;
}

struct SmallProblem {
  Dataset train, holdout;
  Model model;
};

SmallProblem small_problem(std::vector<std::size_t> hidden = {8}) {
  auto [train, holdout] = split_holdout(generate_synthetic(5, 4, 400, 1.0, 11), 0.2, 11);
  Model model(4, 5, std::move(hidden));
  model.initialize(11);
  return {std::move(train), std::move(holdout), std::move(model)};
}

std::string history_text(const TrainResult& r) {
  std::ostringstream out;
  write_history_jsonl(out, r.history);
  return out.str();
}

}  // namespace

TEST(Synthetic, SameSeedIsBitIdentical) {
  const Dataset a = generate_synthetic(6, 3, 200, 1.5, 42);
  const Dataset b = generate_synthetic(6, 3, 200, 1.5, 42);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].y, b[i].y);
    EXPECT_EQ(*a[i].eta, *b[i].eta);
  }
  const Dataset c = generate_synthetic(6, 3, 200, 1.5, 43);
  EXPECT_NE(a[0].x, c[0].x);
}

TEST(Synthetic, LabelMarginalsMatchMeanEta) {
  // Binomial standard error of each class frequency around the mean eta.
  const std::size_t C = 20, n = 5000;
  const Dataset data = generate_synthetic(C, 16, n, 2.0, 7);
  std::vector<double> expected(C, 0.0), observed(C, 0.0);
  for (const auto& s : data) {
    observed[s.y] += 1.0;
    for (std::size_t c = 0; c < C; ++c) expected[c] += (*s.eta)[c];
  }
  for (std::size_t c = 0; c < C; ++c) {
    const double p = expected[c] / static_cast<double>(n);
    const double sigma = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
    EXPECT_LE(std::abs(observed[c] - expected[c]), 3.0 * sigma) << "class " << c;
  }
}

TEST(Synthetic, LabelCountsPassChiSquareAgainstEta) {
  // Given the features, class counts have variance sum_i eta_ic (1 - eta_ic);
  // the sum of squared standardized deviations is roughly chi-square with C - 1
  // degrees of freedom, whose 99.9% quantile at 19 is about 43.8.
  const std::size_t C = 20;
  for (std::uint64_t seed : {7, 1, 2, 3, 4, 5}) {
    const Dataset data = generate_synthetic(C, 16, 5000, 2.0, seed);
    std::vector<double> expected(C, 0.0), variance(C, 0.0), observed(C, 0.0);
    for (const auto& s : data) {
      observed[s.y] += 1.0;
      for (std::size_t c = 0; c < C; ++c) {
        expected[c] += (*s.eta)[c];
        variance[c] += (*s.eta)[c] * (1.0 - (*s.eta)[c]);
      }
    }
    double chi2 = 0.0;
    for (std::size_t c = 0; c < C; ++c) chi2 += std::pow(observed[c] - expected[c], 2) / variance[c];
    EXPECT_LT(chi2, 43.8) << "seed " << seed;
  }
}

TEST(Synthetic, EtaIsStrictlyOrderedDistribution) {
  for (const auto& s : generate_synthetic(20, 16, 1000, 2.0, 1)) {
    EXPECT_NO_THROW(CondDist{*s.eta});
    EXPECT_LT(s.y, 20u);
  }
}

TEST(Synthetic, SharpLimitLabelsAreTheArgmax) {
  const Dataset data = generate_synthetic(10, 8, 2000, 0.02, 5);
  std::size_t mismatches = 0;
  for (const auto& s : data) {
    const auto& eta = *s.eta;
    const auto top = static_cast<std::size_t>(std::max_element(eta.begin(), eta.end()) - eta.begin());
    mismatches += s.y != top;
  }
  EXPECT_LE(mismatches, 20u);  // at most 1% of samples
  // Much sharper still, softmax underflows to exact zeros and no tie-free eta exists.
  EXPECT_THROW(generate_synthetic(10, 8, 10, 1e-4, 5), std::runtime_error);
}

TEST(Synthetic, RejectsBadArguments) {
  EXPECT_THROW(generate_synthetic(1, 3, 10, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(generate_synthetic(3, 0, 10, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(generate_synthetic(3, 3, 10, 0.0, 0), std::invalid_argument);
}

TEST(SplitHoldout, PartitionsDeterministically) {
  const Dataset data = generate_synthetic(4, 2, 100, 1.0, 9);
  const auto [train, holdout] = split_holdout(data, 0.2, 9);
  EXPECT_EQ(train.size(), 80u);
  EXPECT_EQ(holdout.size(), 20u);
  std::vector<std::vector<double>> all, parts;
  for (const auto& s : data) all.push_back(s.x);
  for (const auto& s : train) parts.push_back(s.x);
  for (const auto& s : holdout) parts.push_back(s.x);
  std::sort(all.begin(), all.end());
  std::sort(parts.begin(), parts.end());
  EXPECT_EQ(all, parts);
  EXPECT_EQ(split_holdout(data, 0.2, 9).second[0].x, holdout[0].x);
  EXPECT_THROW(split_holdout(data, 1.0, 9), std::invalid_argument);
}

TEST(Model, LinearForwardIsAffine) {
  Model m(2, 3);
  EXPECT_EQ(m.kind(), ModelKind::Linear);
  auto p = m.params();
  ASSERT_EQ(p.size(), 9u);
  const double w[9] = {1, 2, 3, 4, 5, 6, 0.5, -1, 2};  // 3x2 weights then 3 biases
  std::copy(std::begin(w), std::end(w), p.begin());
  EXPECT_EQ(m.scores(std::vector<double>{1, -1}), (std::vector<double>{-1 + 0.5, -1 - 1, -1 + 2}));
  EXPECT_EQ(Model(2, 3, {4}).kind(), ModelKind::Mlp);
  EXPECT_THROW(m.scores(std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(Model, InitializationIsSeededAndBounded) {
  Model a(16, 20, {64}), b(16, 20, {64});
  a.initialize(1);
  b.initialize(1);
  EXPECT_TRUE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  const auto first_layer = a.params().subspan(0, 64 * 17);
  for (double v : first_layer) EXPECT_LE(std::abs(v), 0.25);
  const auto second_layer = a.params().subspan(64 * 17);
  for (double v : second_layer) EXPECT_LE(std::abs(v), 0.125);
  b.initialize(2);
  EXPECT_FALSE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
}

TEST(Model, BackwardMatchesFiniteDifferences) {
  Model m(3, 4, {5, 6});
  m.initialize(8);
  const std::vector<double> x{0.3, -1.2, 0.8};
  const std::vector<double> upstream{0.7, -0.2, 1.1, -0.5};
  auto objective = [&](const Model& model) {
    const auto s = model.scores(x);
    return std::inner_product(s.begin(), s.end(), upstream.begin(), 0.0);
  };
  auto ws = m.workspace();
  m.forward(x, ws);
  std::vector<double> grad(m.params().size(), 0.0);
  m.backward(upstream, ws, grad);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    Model up = m, down = m;
    up.params()[i] += 1e-6;
    down.params()[i] -= 1e-6;
    EXPECT_NEAR(grad[i], (objective(up) - objective(down)) / 2e-6, 1e-7) << "param " << i;
  }
}

TEST(ExperimentConfig, ValidatesAndSchedules) {
  ExperimentConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_DOUBLE_EQ(c.lr_at(29), 1e-2);
  EXPECT_DOUBLE_EQ(c.lr_at(30), 1e-3);
  EXPECT_NEAR(c.lr_at(89), 1e-4, 1e-18);
  EXPECT_EQ(c.loss_at(9).family, LossFamily::CE);
  c.loss = parse_loss_spec("autkc-exp@5");
  EXPECT_EQ(c.loss_at(10).family, LossFamily::AutkcExp);
  c.warmup_epochs = 91;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.warmup_epochs = 10;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.batch_size = 1;
  c.lr = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(SgdTrain, ZeroLearningRateLeavesWeightsUnchanged) {
  auto p = small_problem();
  auto config = small_config("autkc-sq@2");
  config.lr = 0.0;
  const TrainResult r = sgd_train(p.model, p.train, p.holdout, config);
  EXPECT_TRUE(std::equal(r.model.params().begin(), r.model.params().end(), p.model.params().begin()));
  for (const auto& rec : r.history) {
    EXPECT_EQ(rec.eval.autkc_up, r.history.front().eval.autkc_up);
    EXPECT_EQ(rec.eval.curve.acc, r.history.front().eval.curve.acc);
  }
}

TEST(SgdTrain, LinearCrossEntropySeparatesTwoClasses) {
  Dataset data;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 0.5);
  for (int i = 0; i < 200; ++i) {
    const std::size_t y = i % 2;
    data.push_back({{(y == 0 ? -2.0 : 2.0) + noise(rng), noise(rng)}, y, std::nullopt});
  }
  Model model(2, 2);
  model.initialize(4);
  ExperimentConfig config;
  config.K_eval = {1};
  config.k_max = 2;
  config.epochs = 50;
  config.warmup_epochs = 0;
  config.batch_size = 16;
  config.lr = 0.1;
  const TrainResult r = sgd_train(model, data, data, config);
  EXPECT_EQ(topk_up(score_dataset(r.model, data), 1), 1.0);
}

TEST(SgdTrain, SameConfigReproducesHistoryBitwise) {
  auto p = small_problem();
  const auto config = small_config("autkc-exp@2");
  const TrainResult a = sgd_train(p.model, p.train, p.holdout, config);
  const TrainResult b = sgd_train(p.model, p.train, p.holdout, config);
  EXPECT_EQ(history_text(a), history_text(b));
  EXPECT_TRUE(std::equal(a.model.params().begin(), a.model.params().end(), b.model.params().begin()));
  auto other = config;
  other.seed = 4;
  EXPECT_NE(history_text(sgd_train(p.model, p.train, p.holdout, other)), history_text(a));
}

TEST(SgdTrain, FullWarmupEqualsPureCrossEntropy) {
  auto p = small_problem();
  auto warm = small_config("autkc-exp@2");
  warm.warmup_epochs = warm.epochs;
  auto pure = small_config("ce");
  pure.warmup_epochs = 0;
  const TrainResult a = sgd_train(p.model, p.train, p.holdout, warm);
  const TrainResult b = sgd_train(p.model, p.train, p.holdout, pure);
  EXPECT_EQ(history_text(a), history_text(b));
  EXPECT_TRUE(std::equal(a.model.params().begin(), a.model.params().end(), b.model.params().begin()));
}

TEST(SgdTrain, HistoryFollowsWarmupAndGlobalLrClock) {
  auto p = small_problem();
  const auto config = small_config("autkc-logit@2");
  const TrainResult r = sgd_train(p.model, p.train, p.holdout, config);
  ASSERT_EQ(r.history.size(), 6u);
  const std::vector<std::string> families{"ce", "ce", "autkc-logit@2", "autkc-logit@2", "autkc-logit@2",
                                          "autkc-logit@2"};
  for (std::size_t e = 0; e < 6; ++e) {
    EXPECT_EQ(r.history[e].epoch, e);
    EXPECT_EQ(r.history[e].loss_family, families[e]);
    EXPECT_DOUBLE_EQ(r.history[e].lr, e < 3 ? 0.05 : 0.005);
  }
  // The loss recorded at the hand-off epoch is the new loss evaluated on the training data.
  EXPECT_GT(r.history[2].train_loss, 0.0);
}

TEST(SgdTrain, MetricIdentityHoldsOnEveryEvaluation) {
  auto p = small_problem({});
  const TrainResult r = sgd_train(p.model, p.train, p.holdout, small_config("l3@2"));
  for (const auto& rec : r.history)
    for (const auto& [K, v] : rec.eval.autkc_up) {
      double mean = 0.0;
      for (std::size_t k = 1; k <= K; ++k) mean += rec.eval.curve.at(k);
      EXPECT_NEAR(v, mean / static_cast<double>(K), 1e-15);
    }
}

TEST(SgdTrain, DivergenceIsReported) {
  auto p = small_problem();
  auto config = small_config("ce");
  config.lr = 1e12;
  config.momentum = 0.0;
  EXPECT_THROW(sgd_train(p.model, p.train, p.holdout, config), TrainingDiverged);
}

TEST(SgdTrain, RejectsInvalidSetups) {
  auto p = small_problem();
  auto config = small_config("autkc-exp@5");  // cutoff must stay below C = 5
  EXPECT_THROW(sgd_train(p.model, p.train, p.holdout, config), std::out_of_range);
  EXPECT_THROW(sgd_train(p.model, Dataset{}, p.holdout, small_config("ce")), std::invalid_argument);
}

TEST(Evaluate, ConstantScoresGiveZero) {
  const Dataset data = generate_synthetic(6, 3, 100, 1.0, 2);
  const Model zero(3, 6);  // all parameters zero
  const std::vector<std::size_t> Ks{1, 3, 5};
  const EvalReport r = evaluate(zero, data, Ks, 6);
  for (std::size_t K : Ks) EXPECT_EQ(r.autkc_up.at(K), 0.0);
  for (std::size_t k = 1; k < 6; ++k) EXPECT_EQ(r.curve.at(k), 0.0);
  for (std::size_t K : Ks) EXPECT_EQ(r.rp_agreement.at(K), 0.0);
  EXPECT_THROW(evaluate(zero, Dataset{}, Ks, 6), std::invalid_argument);
}

TEST(Evaluate, BayesScorerMatchesEtaRanks) {
  const std::size_t C = 8;
  const Dataset data = generate_synthetic(C, 5, 500, 1.0, 6);
  ScoredSet bayes(C);
  for (const auto& s : data) bayes.add(*s.eta, s.y);
  const std::vector<std::size_t> Ks{1, 2, 4, 7};
  const EvalReport r = evaluate_scores(bayes, data, Ks, C, 0.0);
  for (std::size_t K : Ks) {
    double total = 0.0;
    for (const auto& s : data) {
      std::size_t above = 0;
      for (double v : *s.eta) above += v > (*s.eta)[s.y];
      total += static_cast<double>(K - std::min(above, K)) / static_cast<double>(K);
    }
    EXPECT_NEAR(r.autkc_up.at(K), total / static_cast<double>(data.size()), 1e-14) << K;
    EXPECT_EQ(r.rp_agreement.at(K), 1.0);
  }
}

TEST(Evaluate, RpAgreementOnlyWithKnownEta) {
  Dataset data = generate_synthetic(4, 2, 50, 1.0, 3);
  Model m(2, 4);
  m.initialize(3);
  const std::vector<std::size_t> Ks{1};
  EXPECT_EQ(evaluate(m, data, Ks, 4).rp_agreement.size(), 1u);
  data[0].eta.reset();
  EXPECT_TRUE(evaluate(m, data, Ks, 4).rp_agreement.empty());
}

TEST(Csv, RoundTripPreservesFeatures) {
  const Dataset data = generate_synthetic(5, 3, 50, 1.0, 12);
  const auto path = scratch("round_trip.csv");
  save_csv(path.string(), data);
  const Dataset back = load_csv(path.string());
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].y, data[i].y);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(back[i].x[j], data[i].x[j], 1e-9);
    EXPECT_FALSE(back[i].eta.has_value());
  }
}

TEST(Csv, TwoRowFile) {
  const auto path = scratch("toy.csv");
  write_file(path, "f0,f1,label\n0.5,1.5,0\n-1,2,2\n");
  const Dataset data = load_csv(path.string());
  ASSERT_EQ(data.size(), 2u);
  EXPECT_EQ(feature_dim(data), 2u);
  EXPECT_EQ(infer_num_classes(data), 3u);
  EXPECT_EQ(data[1].x, (std::vector<double>{-1, 2}));
}

TEST(Csv, ErrorsCarryLineNumbers) {
  const auto path = scratch("bad.csv");
  write_file(path, "f0,f1,label\n0.5,1.5,0\n1,2,1\n1,abc,1\n");
  try {
    (void)load_csv(path.string());
    ADD_FAILURE() << "non-numeric feature accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("abc"), std::string::npos);
  }
  write_file(path, "f0,f1,label\n0.5,1.5,0\n1,2,-1\n");
  EXPECT_THROW(load_csv(path.string()), ParseError);
  write_file(path, "f0,f1,label\n0.5,1.5\n");
  EXPECT_THROW(load_csv(path.string()), ParseError);
  write_file(path, "x,y,label\n0.5,1.5,1\n");
  EXPECT_THROW(load_csv(path.string()), ParseError);
  EXPECT_THROW(load_csv(scratch("missing.csv").string()), std::runtime_error);
}

TEST(Csv, ScoresFileWithOptionalHeader) {
  const auto path = scratch("scores.csv");
  write_file(path, "s0,s1,s2,s3,s4,label\n5,4,3,2,1,0\n4,3,2,5,1,0\n");
  const ScoredSet set = load_scores_csv(path.string());
  EXPECT_EQ(set.size(), 2u);
  EXPECT_DOUBLE_EQ(autkc_up(set, 3), 5.0 / 6.0);
  write_file(path, "5,4,3,2,1,0\n4,3,2,5,1,9\n");
  try {
    (void)load_scores_csv(path.string());
    ADD_FAILURE() << "out-of-range label accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Csv, SeparateLabelsFile) {
  const auto scores = scratch("scores_only.csv");
  const auto labels = scratch("labels.txt");
  write_file(scores, "5,4,3,2,1\n4,3,2,5,1\n");
  write_file(labels, "0\n0\n");
  EXPECT_DOUBLE_EQ(autkc_up(load_scores_with_labels(scores.string(), labels.string()), 3), 5.0 / 6.0);
  write_file(labels, "0\n");
  EXPECT_THROW(load_scores_with_labels(scores.string(), labels.string()), ParseError);
}

TEST(HistoryJsonl, OneObjectPerEpochWithDocumentedKeys) {
  auto p = small_problem();
  const TrainResult r = sgd_train(p.model, p.train, p.holdout, small_config("tce@2"));
  std::istringstream in(history_text(r));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"epoch", "loss_family", "train_loss", "lr", "autkc_up", "topk"})
      EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["epoch"], lines);
    EXPECT_TRUE(j["autkc_up"].contains("1") && j["autkc_up"].contains("2"));
    EXPECT_EQ(j["topk"].size(), 5u);
    ++lines;
  }
  EXPECT_EQ(lines, 6u);
}
