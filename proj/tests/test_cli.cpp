#include <gtest/gtest.h>

#include <filesystem>

#include "ppann/cli.hpp"

using namespace ppann;
using namespace ppann::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ppann_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

PannModel small_model(std::uint64_t seed) {
  return PannModel(Picnn::initialized(default_config(Architecture::Type1, 1), seed));
}

}  // namespace

TEST(RunConfig, DefaultsFollowStudy) {
  RunConfig c;
  EXPECT_EQ(c.train_config().optimizer, OptimizerKind::Adam);
  EXPECT_EQ(c.train_config().epochs, 7000);
  EXPECT_EQ(c.train_config().restarts, 5);
  c.study = Study::Vector;
  EXPECT_EQ(c.train_config().optimizer, OptimizerKind::QuasiNewton);
  EXPECT_TRUE(c.train_config().normalize_stress);
}

TEST(RunConfig, NestedSectionsApply) {
  RunConfig c;
  c.apply(json::parse(R"({"seed": 9, "matgen": {"study": "vector"}, "picnn": {"init": "fan-in-abs"},
                          "calib": {"epochs": 12, "optimizer": "adam"}, "verify": {"convexity_pairs": 5}})"));
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.study, Study::Vector);
  EXPECT_EQ(c.init, InitScheme::FanInAbs);
  EXPECT_EQ(c.epochs, 12);
  EXPECT_EQ(c.train_config().optimizer, OptimizerKind::Adam);
  EXPECT_EQ(c.probe.convexity_pairs, 5);
}

TEST(RunConfig, EchoRoundTrips) {
  RunConfig a;
  a.study = Study::II;
  a.scalar_case = ScalarCase::C;
  a.arch = "Type3";
  a.epochs = 77;
  RunConfig b;
  b.apply(a.to_json());
  EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(RunConfig, RejectsBadEntries) {
  RunConfig c;
  EXPECT_THROW(c.apply(json::parse(R"({"calib": {"epoch": 3}})")), UsageError);
  EXPECT_THROW(c.apply(json::parse(R"({"matgen": {"study": "III"}})")), UsageError);
  EXPECT_THROW(c.apply(json::parse(R"({"calib": {"epochs": "many"}})")), UsageError);
  EXPECT_THROW(c.apply(json::parse(R"([1, 2])")), UsageError);
  c = RunConfig{};
  c.arch = "Type9";
  EXPECT_THROW(c.validate(), UsageError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), IoError);
}

TEST(Gen, WritesIdenticalBytesOnRerun) {
  RunConfig c;
  c.study = Study::II;
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  const auto d = cmd_gen(c, a);
  cmd_gen(c, b);
  EXPECT_EQ(d.calibration.size(), 1212u);
  EXPECT_EQ(d.test.size(), 19897u);
  EXPECT_EQ(read_file((a / "test.csv").string()), read_file((b / "test.csv").string()));
  EXPECT_EQ(read_csv((a / "calibration.csv").string()), d.calibration);
  EXPECT_TRUE(fs::exists(a / "config.json"));
}

TEST(Eval, PerfectOracleGivesSentinel) {
  // Zero network at F = I predicts exactly zero stress, so the error is exactly zero.
  const PannModel m(Picnn(default_config(Architecture::Type1, 1)));
  Dataset d = build_study1(ScalarCase::A, DataRole::Test);
  d.tuples.resize(505);  // five t values of the mixed path
  for (auto& tup : d.tuples) {
    tup.F = Tensor2::Identity();
    tup.P = Tensor2::Zero();
  }
  const auto s = cmd_eval(RunConfig{}, m, d, scratch("eval"));
  EXPECT_EQ(s.log10_mse, -std::numeric_limits<double>::infinity());
  EXPECT_EQ(s.per_t.size(), 5u);
}

TEST(Eval, OneRowPerDistinctT) {
  const PannModel m = small_model(4);
  Dataset d = build_study1(ScalarCase::B, DataRole::Test);
  d.tuples.resize(101 * 7);
  const auto out = scratch("eval_rows");
  const auto s = cmd_eval(RunConfig{}, m, d, out);
  EXPECT_TRUE(std::isfinite(s.log10_mse));
  const std::string csv = read_file((out / "per_t_mse.csv").string());
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 8);
  const std::string paths = read_file((out / "stress_paths.csv").string());
  EXPECT_EQ(std::count(paths.begin(), paths.end(), '\n'), 101 * 7 + 1);
  EXPECT_NE(paths.find("\nmixed,1,0.0050000000000000001,100,0.5,"), std::string::npos);
}

TEST(Verify, AblatedModelFailsAndFreshModelPasses) {
  RunConfig c;
  c.probe.symmetry_samples = 50;
  c.probe.convexity_pairs = 100;
  const PannModel m = small_model(5);
  EXPECT_TRUE(cmd_verify(c, m, false, {}).passed());
  const auto out = scratch("verify");
  const auto r = cmd_verify(c, m, true, out);
  EXPECT_FALSE(r.passed());
  EXPECT_NE(read_file((out / "verify.txt").string()).find("normalisation: FAIL"), std::string::npos);
}

TEST(Train, SmokeRunWritesArtifacts) {
  RunConfig c;
  c.arch = "Type2";
  c.epochs = 10;
  c.restarts = 2;
  StudyData d = generate(c);
  const auto out = scratch("train");
  const auto rep = cmd_train(c, d, out);
  ASSERT_EQ(rep.runs.size(), 2u);
  for (const char* f : {"model.txt", "model_restart0.txt", "model_restart1.txt", "report.txt", "history.csv",
                        "wall_time.txt", "config.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const PannModel m = load_model((out / "model.txt").string());
  EXPECT_EQ(m.metadata.at("seed"), std::to_string(42 + rep.best()));
  EXPECT_EQ(m.metadata.at("optimizer"), "adam");
  EXPECT_EQ(m.metadata.at("dataset_fnv1a"), fnv1a_hex(to_csv(d.calibration)));
  EXPECT_EQ(m.net.params(), rep.runs[rep.best()].model.net.params());
}

TEST(Repro, SummaryFlagsExcludedRestart) {
  RunConfig c;
  c.arch = "Type1";
  c.epochs = 5;
  c.restarts = 3;
  const auto res = cmd_repro(c, scratch("repro"));
  EXPECT_NE(res.summary.find("excluded(worst test)"), std::string::npos);
  EXPECT_NE(res.summary.find("reference average: calib=-4.54 test=-3.60"), std::string::npos);
  EXPECT_TRUE(res.verification_passed());
}
