#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "epmbench/cli.hpp"
#include "epmbench/filters.hpp"
#include "epmbench/io.hpp"

using namespace epmbench;
namespace fs = std::filesystem;

namespace {

const char* kConfig = R"({
  "name": "tiny",
  "seed": 5,
  "scene": {"kind": "checkerboard", "period": 0.08, "amplitude": 1.0},
  "motion": {"type": "constant", "theta": [0.1, 0.6, 0], "duration_us": 150000},
  "camera": {"width": 32, "height": 24, "f": 120},
  "aps_start_us": 20000,
  "noise": {"ba_rate": 2.0}
})";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("epmbench_test_cli_" + std::to_string(::getpid()));
    fs::create_directories(root_);
    std::ofstream(root_ / "config.json") << kConfig;
    Result r = run({"simulate", "--config", p("config.json"), "--out", p("ds")});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }
  static std::string p(const std::string& rel) { return (root_ / rel).string(); }
  static fs::path root_;
};

fs::path CliTest::root_;

}  // namespace

TEST_F(CliTest, SimulateIsDeterministicForFixedSeed) {
  Result r = run({"simulate", "--config", p("config.json"), "--out", p("ds_again")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"events.evt", "imu.csv", "aps/frame_0000.pgm", "dataset.json", "sensor.json"}) {
    if (!fs::exists(root_ / "ds" / f)) continue;
    EXPECT_EQ(slurp(root_ / "ds" / f), slurp(root_ / "ds_again" / f)) << f;
  }
  EXPECT_EQ(slurp(root_ / "ds" / "events.evt"), slurp(root_ / "ds_again" / "events.evt"));
  r = run({"simulate", "--config", p("config.json"), "--seed", "6", "--out", p("ds_other")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(root_ / "ds" / "events.evt"), slurp(root_ / "ds_other" / "events.evt"));
}

TEST_F(CliTest, DenoiseMatchesLibraryFilter) {
  Result r = run({"denoise", "--dataset", p("ds"), "--method", "nn2", "--dt", "3000", "--out", p("den")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto m = io::read_manifest(p("ds/dataset.json"));
  EventStream ev = io::read_events(m.resolve(m.events));
  auto want = denoise::nn_filter(ev, 3000, 1, 2);
  EXPECT_EQ(io::read_events(p("den/denoised.evt")), want.kept);
  EXPECT_EQ(io::read_events(p("den/removed.evt")), want.removed);
}

TEST_F(CliTest, UnknownMethodIsAUsageError) {
  Result r = run({"denoise", "--dataset", p("ds"), "--method", "median", "--out", p("x")});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
}

TEST_F(CliTest, LabelWithoutCalibrationFails) {
  Result r = run({"label", "--dataset", p("ds"), "--out", p("lab")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: missing_calibration: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST_F(CliTest, MissingDatasetIsAnIoError) {
  Result r = run({"label", "--dataset", p("nowhere"), "--truth", "--out", p("lab")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
}

TEST_F(CliTest, BenchIsIdenticalAcrossThreadCounts) {
  ASSERT_EQ(run({"label", "--dataset", p("ds"), "--truth", "--out", p("lab")}).code, 0);
  Result a = run({"bench", "--dataset", p("ds"), "--labels", p("lab"), "--method", "raw,baf,nn2,ie", "--threads",
                  "1", "--out", p("b1")});
  ASSERT_EQ(a.code, 0) << a.err;
  Result b = run({"bench", "--dataset", p("ds"), "--labels", p("lab"), "--method", "raw,baf,nn2,ie", "--threads",
                  "4", "--out", p("b4")});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(root_ / "b1" / "report.json"), slurp(root_ / "b4" / "report.json"));
  EXPECT_EQ(slurp(root_ / "b1" / "report.csv"), slurp(root_ / "b4" / "report.csv"));

  Result rep = run({"report", "--input", p("b1"), "--out", p("rep")});
  ASSERT_EQ(rep.code, 0) << rep.err;
  EXPECT_TRUE(fs::exists(root_ / "rep" / "summary.svg"));
  Result dup = run({"report", "--input", p("b1"), "--input", p("b4"), "--out", p("rep2")});
  EXPECT_EQ(dup.code, 1);
  EXPECT_EQ(dup.err.rfind("error: invalid_argument: ", 0), 0u) << dup.err;
}
