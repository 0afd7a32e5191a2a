#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "commands.hpp"
#include "oskf/json_io.hpp"
#include "oskf/keypoints.hpp"
#include "oskf/ply.hpp"
#include "oskf/synth.hpp"

namespace oskf {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult oskf(std::vector<std::string> args) {
  args.insert(args.begin(), "oskf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("oskf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  // Object 1: two points 0.2 m apart (0.1 d = 2 cm).
  void write_models() const {
    write_ply_points(dir_ / "obj1.ply", {Vec3(-0.1, 0, 0), Vec3(0.1, 0, 0)});
    write(
        "models.json",
        R"([{"obj": 1, "ply": "obj1.ply"}, {"obj": 2, "ply": "obj1.ply", "symmetric": true}])");
  }

  fs::path dir_;
};

TEST_F(Cli, NoSubcommandOrUnknownFlagIsBadInput) {
  EXPECT_EQ(oskf({}).code, 2);
  const CliResult r = oskf({"eval", "--pred", "a", "--gt", "b", "--models", "c", "--bogus", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bogus"), std::string::npos);
  EXPECT_EQ(oskf({"frobnicate"}).code, 2);
}

TEST_F(Cli, HelpExitsZero) {
  const CliResult r = oskf({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("selfcheck"), std::string::npos);
}

TEST_F(Cli, EvalPerfectPredictions) {
  write_models();
  std::vector<InstanceRecord> gt;
  Rng rng(1);
  for (int i = 0; i < 4; ++i) gt.push_back({1, i, 1 + i % 2, random_pose(rng, Frustum{})});
  write_records(fs::path(path("gt.jsonl")), gt);
  const CliResult r = oskf({"eval", "--pred", path("gt.jsonl"), "--gt", path("gt.jsonl"), "--models",
                      path("models.json"), "--report", path("report.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1            2     1.0000     1.0000     1.0000     1.0000"), std::string::npos)
      << r.out;
  EXPECT_NE(r.out.find("all          4     1.0000     1.0000     1.0000     1.0000"), std::string::npos)
      << r.out;
  const auto report = nlohmann::json::parse(slurp(path("report.json")));
  EXPECT_EQ(report.at("objects").size(), 2u);
}

TEST_F(Cli, EvalShiftedPredictionsMatchHandValues) {
  write_models();
  const std::vector<double> shifts{0.01, 0.03, 0.015, 0.05};
  std::vector<InstanceRecord> gt, pred;
  for (int i = 0; i < 4; ++i) {
    const Pose g{Mat3::Identity(), Vec3(0, 0, 1)};
    Pose p = g;
    p.translation.y() += shifts[i];
    gt.push_back({3, i, 1, g});
    pred.push_back({3, i, 1, p});
  }
  write_records(fs::path(path("gt.jsonl")), gt);
  write_records(fs::path(path("pred.jsonl")), pred);
  const CliResult r = oskf({"eval", "--pred", path("pred.jsonl"), "--gt", path("gt.jsonl"), "--models",
                      path("models.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  // ADD hits: 0.01, 0.015 of 4; AUC (0.09+0.07+0.085+0.05)/0.4; mean 26.25 mm.
  EXPECT_EQ(r.out,
            "obj     count   add_0.1d   auc_10cm   2deg2cm    5deg5cm    mean_mm\n"
            "1            4     0.5000     0.7375     0.5000     1.0000     26.2500\n"
            "all          4     0.5000     0.7375     0.5000     1.0000     26.2500\n");
}

TEST_F(Cli, EvalMissingKeyIsBadInputWithListing) {
  write_models();
  const Pose g;
  write_records(fs::path(path("gt.jsonl")), {{1, 1, 1, g}, {1, 2, 1, g}});
  write_records(fs::path(path("pred.jsonl")), {{1, 1, 1, g}});
  const CliResult r = oskf({"eval", "--pred", path("pred.jsonl"), "--gt", path("gt.jsonl"), "--models",
                      path("models.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("key mismatch"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("ground truth without prediction: scene=1 im=2 obj=1"), std::string::npos) << r.err;
}

TEST_F(Cli, PathsAreValidatedBeforeWork) {
  write_models();
  const CliResult r = oskf({"eval", "--pred", path("nope.jsonl"), "--gt", path("nope.jsonl"), "--models",
                      path("models.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--pred"), std::string::npos);
  EXPECT_EQ(oskf({"demo", "--steps", "0", "--out", path("no/such/dir/x.ckpt")}).code, 2);
}

TEST_F(Cli, FpsSingleton) {
  write_ply_points(dir_ / "m.ply", {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(5, 5, 5)});
  const CliResult r = oskf({"fps", "--ply", path("m.ply"), "--k", "1", "--out", path("k.json"),
                      "--seed-index", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("k.json")));
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0][0].get<double>(), 1.0);
}

TEST_F(Cli, FpsMatchesLibraryBitForBit) {
  const ObjectModel m = synthetic_model(300);
  write_ply_points(dir_ / "m.ply", m.points);
  const CliResult r = oskf({"fps", "--ply", path("m.ply"), "--k", "32", "--out", path("k.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::vector<Vec3> pts = read_ply_points(dir_ / "m.ply");
  const KeypointSet lib = farthest_point_sample(pts, 32, default_fps_seed(pts));
  EXPECT_EQ(slurp(path("k.json")), keypoints_to_json(lib) + "\n");
}

TEST_F(Cli, FpsMalformedPlyReportsLocation) {
  write("bad.ply", "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                   "property float z\nend_header\n0 0 0\n1 oops 0\n");
  const CliResult r = oskf({"fps", "--ply", path("bad.ply"), "--k", "1", "--out", path("k.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad.ply:9"), std::string::npos) << r.err;
}

TEST_F(Cli, FpsInvalidKIsBadInput) {
  write_ply_points(dir_ / "m.ply", {Vec3(0, 0, 0), Vec3(1, 0, 0)});
  EXPECT_EQ(oskf({"fps", "--ply", path("m.ply"), "--k", "3", "--out", path("k.json")}).code, 2);
}

TEST_F(Cli, DemoZeroStepsGivesEqualRows) {
  const CliResult r = oskf({"demo", "--seed", "3", "--steps", "0", "--scenes", "2", "--holdout", "5",
                      "--out", path("d.ckpt"), "--table", path("t.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream table(slurp(path("t.txt")));
  std::string header, line;
  std::getline(table, header);
  std::vector<std::string> rest;
  while (std::getline(table, line)) rest.push_back(line.substr(9));  // drop the iteration column
  ASSERT_EQ(rest.size(), 4u);
  for (const auto& row : rest) EXPECT_EQ(row, rest[0]);
  EXPECT_TRUE(fs::exists(path("d.ckpt")));
}

TEST_F(Cli, DemoIsDeterministic) {
  const std::vector<std::string> common{"demo", "--seed", "2", "--steps", "4", "--scenes", "3",
                                        "--holdout", "3", "--batch", "2"};
  auto a_args = common, b_args = common;
  for (auto* v : {&a_args, &b_args}) v->push_back("--out");
  a_args.push_back(path("a.ckpt"));
  b_args.push_back(path("b.ckpt"));
  const CliResult a = oskf(a_args), b = oskf(b_args);
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(path("a.ckpt")), slurp(path("b.ckpt")));
  const auto strip = [](const std::string& s) { return s.substr(0, s.rfind("checkpoint ")); };
  EXPECT_EQ(strip(a.out), strip(b.out));
}

TEST_F(Cli, ConfigFileSuppliesFlagsAndFlagsWin) {
  write("cfg.json", R"({"seed": 3, "steps": 0, "scenes": 2, "holdout": 2})");
  const CliResult a = oskf({"demo", "--config", path("cfg.json"), "--out", path("a.ckpt")});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("seed 3  steps 0  scenes 2  holdout 2"), std::string::npos) << a.out;
  const CliResult b = oskf({"--config", path("cfg.json"), "demo", "--holdout", "3", "--out", path("b.ckpt")});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_NE(b.out.find("seed 3  steps 0  scenes 2  holdout 3"), std::string::npos) << b.out;
}

TEST_F(Cli, ConfigFileErrors) {
  write("unknown.json", R"({"steps": 0, "warp": 9})");
  EXPECT_EQ(oskf({"demo", "--config", path("unknown.json"), "--out", path("a.ckpt")}).code, 2);
  write("nested.json", R"({"steps": [1, 2]})");
  EXPECT_EQ(oskf({"demo", "--config", path("nested.json")}).code, 2);
  write("broken.json", "{steps: ");
  EXPECT_EQ(oskf({"demo", "--config", path("broken.json")}).code, 2);
  EXPECT_EQ(oskf({"demo", "--config", path("absent.json")}).code, 2);
}

TEST_F(Cli, SceneWritesPyramidAndSidecar) {
  const CliResult r = oskf({"scene", "--seed", "4", "--out", path("s4"), "--crop-size", "64"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("s4.pyr")));
  const auto j = nlohmann::json::parse(slurp(path("s4.json")));
  EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 4u);
  EXPECT_EQ(read_pyramid(path("s4.pyr")).crop_size, 64.0);
}

TEST_F(Cli, SelfcheckNamesCorruptCheckpoint) {
  write("bad.ckpt", "garbage");
  const CliResult r = oskf({"selfcheck", "--checkpoint", path("bad.ckpt")});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("[FAIL] checkpoint"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("[PASS] gradient check"), std::string::npos) << r.out;
}

}  // namespace
}  // namespace oskf
