#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int code = -1;
  std::string out, err;
};

fs::path work_dir() {
  const auto dir = fs::temp_directory_path() / "autkc_cli_tests";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunResult run(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt";
  const std::string cmd = std::string("'") + AUTKC_CLI + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

fs::path fresh(const std::string& name) {
  const fs::path p = work_dir() / name;
  fs::remove_all(p);
  return p;
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path two_scorer_scores() {
  const fs::path p = work_dir() / "two_scorer.csv";
  std::ofstream(p) << "5,4,3,2,1,0\n4,3,2,5,1,0\n";
  return p;
}

// Tiny synthetic training flags so every train call finishes in well under a second.
const std::string kTinyTrain = "--C 6 --d 4 --n-train 300 --n-test 100 --epochs 4 --warmup 1 --hidden 8 --K 1 3";

}  // namespace

TEST(CliEval, TwoScorerFixtureGivesFiveSixths) {
  const fs::path out = fresh("eval");
  const auto r = run("eval --scores '" + two_scorer_scores().string() + "' --K 3 --out '" + out.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = load_json(out / "metrics.json");
  EXPECT_DOUBLE_EQ(m["autkc_up"].get<double>(), 5.0 / 6.0);
  EXPECT_EQ(m["n"], 2);
  EXPECT_TRUE(fs::exists(out / "topk_curve.csv"));
  const json manifest = load_json(out / "manifest.json");
  for (const char* key : {"command", "config", "seed", "tool_version", "outputs", "wall_clock_seconds"})
    EXPECT_TRUE(manifest.contains(key)) << key;
}

TEST(CliEval, UsageErrors) {
  const std::string scores = two_scorer_scores().string();
  const auto zero = run("eval --scores '" + scores + "' --K 0 --out '" + fresh("eval0").string() + "'");
  EXPECT_EQ(zero.code, 2);
  const auto kmax = run("eval --scores '" + scores + "' --K 2 --kmax 6 --out '" + fresh("eval1").string() + "'");
  EXPECT_EQ(kmax.code, 2);
  EXPECT_NE(kmax.err.find("C=5"), std::string::npos) << kmax.err;
  EXPECT_EQ(run("eval --K 2").code, 2);  // --scores is required
}

TEST(CliEval, ParseFailureNamesFileAndLine) {
  const fs::path bad = work_dir() / "bad_scores.csv";
  std::ofstream(bad) << "5,4,3,0\n4,x,2,0\n";
  const auto r = run("eval --scores '" + bad.string() + "' --K 1 --out '" + fresh("eval2").string() + "'");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("bad_scores.csv:2"), std::string::npos) << r.err;
}

TEST(CliEval, OutputsAreByteIdenticalAcrossRuns) {
  const std::string scores = two_scorer_scores().string();
  const fs::path a = fresh("eval_a"), b = fresh("eval_b");
  ASSERT_EQ(run("eval --scores '" + scores + "' --K 2 --out '" + a.string() + "'").code, 0);
  ASSERT_EQ(run("eval --scores '" + scores + "' --K 2 --out '" + b.string() + "'").code, 0);
  EXPECT_EQ(slurp(a / "metrics.json"), slurp(b / "metrics.json"));
  EXPECT_EQ(slurp(a / "topk_curve.csv"), slurp(b / "topk_curve.csv"));
}

TEST(CliTrain, AutkcExpReportsEveryRequestedK) {
  const fs::path out = fresh("train_exp");
  const auto r = run("train --loss autkc-exp@3 " + kTinyTrain + " --seed 1 --out '" + out.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = load_json(out / "report.json");
  EXPECT_EQ(report["loss"], "autkc-exp@3");
  EXPECT_TRUE(report["test"]["autkc_up"].contains("1"));
  EXPECT_TRUE(report["test"]["autkc_up"].contains("3"));
  for (const char* f : {"history.jsonl", "topk_curve.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(out / f)) << f;
}

TEST(CliTrain, DefaultSyntheticConfigRunsAutkcExp) {
  // Full default protocol (C=20, 90 epochs); only the short smoke variant runs here,
  // the acceptance binary exercises the full configuration.
  const fs::path out = fresh("train_default");
  const auto r = run("train --loss autkc-exp@5 --epochs 3 --warmup 1 --out '" + out.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = load_json(out / "report.json");
  for (const char* K : {"3", "5", "10"}) EXPECT_TRUE(report["test"]["autkc_up"].contains(K)) << K;
  EXPECT_EQ(report["test"]["n"], 2000);
}

TEST(CliTrain, FullWarmupMatchesPureCrossEntropy) {
  const fs::path warm = fresh("train_warm"), pure = fresh("train_pure");
  ASSERT_EQ(run("train --loss autkc-exp@3 --C 6 --d 4 --n-train 300 --n-test 100 --hidden 8 --K 1 3 "
                "--epochs 4 --warmup 4 --out '" + warm.string() + "'").code, 0);
  ASSERT_EQ(run("train --loss ce --C 6 --d 4 --n-train 300 --n-test 100 --hidden 8 --K 1 3 "
                "--epochs 4 --warmup 0 --out '" + pure.string() + "'").code, 0);
  EXPECT_EQ(slurp(warm / "history.jsonl"), slurp(pure / "history.jsonl"));
  EXPECT_EQ(load_json(warm / "report.json")["test"], load_json(pure / "report.json")["test"]);
}

TEST(CliTrain, TopKBaselineRuns) {
  const fs::path out = fresh("train_l5");
  ASSERT_EQ(run("train --loss l5@3 " + kTinyTrain + " --out '" + out.string() + "'").code, 0);
  EXPECT_EQ(load_json(out / "report.json")["loss"], "l5@3");
}

TEST(CliTrain, UnknownLossListsGrammar) {
  const auto r = run("train --loss bogus " + kTinyTrain + " --out '" + fresh("train_bad").string() + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("LOSS :="), std::string::npos) << r.err;
}

TEST(CliTrain, SameFlagsGiveByteIdenticalOutputs) {
  const fs::path a = fresh("train_a"), b = fresh("train_b");
  const std::string flags = "train --loss autkc-sq@3 " + kTinyTrain + " --seed 2 --out ";
  ASSERT_EQ(run(flags + "'" + a.string() + "'").code, 0);
  ASSERT_EQ(run(flags + "'" + b.string() + "'").code, 0);
  for (const char* f : {"history.jsonl", "report.json", "topk_curve.csv"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(CliTrain, ConfigFileIsOverriddenByFlags) {
  const fs::path cfg = work_dir() / "cfg.json";
  std::ofstream(cfg) << R"({"epochs": 2, "lr": 0.5, "C": 6, "d": 4, "n_train": 300, "n_test": 100, "hidden": [8]})";
  const fs::path out = fresh("train_cfg");
  ASSERT_EQ(run("train --config '" + cfg.string() + "' --loss ce --K 1 3 --warmup 0 --epochs 3 --out '" +
                out.string() + "'").code, 0);
  const json manifest = load_json(out / "manifest.json");
  EXPECT_EQ(manifest["config"]["epochs"], 3);
  EXPECT_EQ(manifest["config"]["lr"], 0.5);
  std::ifstream history(out / "history.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(history, line)) ++lines;
  EXPECT_EQ(lines, 3u);
}

TEST(CliTrain, SweepWritesIsolatedPointsAndGainTable) {
  const fs::path out = fresh("train_sweep");
  const auto r = run("train --loss ce autkc-exp@3 " + kTinyTrain + " --seed 0 1 --jobs 2 --out '" + out.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* loss : {"ce", "autkc-exp@3"})
    for (const char* seed : {"seed-0", "seed-1"}) EXPECT_TRUE(fs::exists(out / loss / seed / "history.jsonl"));
  EXPECT_TRUE(fs::exists(out / "summary.json"));
  EXPECT_TRUE(fs::exists(out / "normalized_gain.csv"));
}

TEST(CliConsistency, SquareFourClassesMeetsRate) {
  const fs::path out = fresh("cons_sq");
  const auto r = run("consistency --family square --C 4 --K 2 --trials 50 --out '" + out.string() + "'");
  const json j = load_json(out / "consistency.json");
  EXPECT_GE(j["rp_success_rate"].get<double>(), 0.95);
  EXPECT_EQ(r.code, j["pass"].get<bool>() ? 0 : 3);
}

TEST(CliConsistency, HingeConstructionHasPositiveGap) {
  const fs::path out = fresh("cons_hinge");
  const auto r = run("consistency --family hinge --C 23 --K 1 --trials 200 --out '" + out.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = load_json(out / "consistency.json");
  EXPECT_GT(j["counterexample"]["risk_gap"].get<double>(), 0.0);
  EXPECT_GT(j["worst_risk_gap"].get<double>(), 0.0);
  EXPECT_TRUE(j["pass"].get<bool>());
}

TEST(CliConsistency, InfeasibleHingeIsExplained) {
  const auto r = run("consistency --family hinge --C 5 --K 2 --out '" + fresh("cons_bad").string() + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("condition unsatisfiable"), std::string::npos) << r.err;
  EXPECT_EQ(run("consistency --family cubic --C 5 --K 2").code, 2);
}

TEST(CliCompareMetrics, ClosedFormsHold) {
  const fs::path out = fresh("cmp");
  ASSERT_EQ(run("compare-metrics --C 5 --k 2 --K 3 --out '" + out.string() + "'").code, 0);
  const json j = load_json(out / "comparison.json");
  EXPECT_EQ(j["counts"]["R"], 6);
  EXPECT_EQ(j["counts"]["S"], 0);
  EXPECT_EQ(j["counts"]["Q"], 0);
  EXPECT_TRUE(j["closed_form_match"].get<bool>());
  EXPECT_EQ(run("compare-metrics --C 5 --k 3 --K 3").code, 2);
  const fs::path sweep = fresh("cmp_sweep");
  ASSERT_EQ(run("compare-metrics --C 12 --sweep --out '" + sweep.string() + "'").code, 0);
  EXPECT_EQ(load_json(sweep / "comparison.json").size(), 66u);
}

TEST(CliLipschitz, SquareAtTwoPasses) {
  const fs::path out = fresh("lip");
  ASSERT_EQ(run("lipschitz --family autkc-sq@2 --C 5 --trials 2000 --out '" + out.string() + "'").code, 0);
  const json j = load_json(out / "lipschitz.json");
  EXPECT_TRUE(j["pass"].get<bool>());
  EXPECT_LE(j["max_ratio"].get<double>(), 1.0);
  EXPECT_EQ(j["bound_pair"].size(), 2u);
}

TEST(CliLipschitz, UsageErrors) {
  const auto hinge = run("lipschitz --family autkc-hinge@2 --C 5");
  EXPECT_EQ(hinge.code, 2);
  EXPECT_NE(hinge.err.find("autkc-sq"), std::string::npos) << hinge.err;
  EXPECT_EQ(run("lipschitz --family hinge --C 5").code, 2);
  EXPECT_EQ(run("lipschitz --family autkc-sq@2 --C 5 --trials 0").code, 2);
}

TEST(Cli, UnknownSubcommandIsUsageError) { EXPECT_EQ(run("frobnicate").code, 2); }
