#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "epmbench/calib.hpp"
#include "epmbench/core.hpp"

namespace epmbench::cli {

/// Parsed command line of one subcommand. Fields irrelevant to the subcommand keep their defaults.
struct RunConfig {
  std::string subcommand;
  std::vector<std::string> datasets;  // manifest files or dataset directories
  std::vector<std::string> labels;    // EPM directories written by `label`
  std::vector<std::string> inputs;    // event files (denoise, bench) or report files (report)
  std::string config_path;
  std::string calibration_path;
  std::string model_path;
  bool use_truth = false;
  std::vector<std::string> methods;
  std::string scene;

  double ba_rate = 0.0;
  double ba_percent = -1.0;  // < 0: use ba_rate
  double hole_prob = 0.0;
  double jitter = 0.0;

  Timestamp dt = 5000;
  int radius = 1;
  int min_count = 1;  // for method "nn"; "nn2" always uses 2

  std::string objective = "hard";
  int epochs = 12;
  int batch = 64;
  double learning_rate = 1e-4;
  std::size_t max_events = 0;
  int m = 25;
  int k = 2;
  double t_max = 5e6;

  calib::SearchConfig search;

  std::uint64_t seed = 1;
  bool seed_given = false;
  std::string out;
  int threads = 1;

  void validate() const;
};

/// Runs the command line. Returns the process exit code; failures print one line
/// "error: <code>: <message>" to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int main(int argc, char** argv);

int cmd_simulate(const RunConfig& c, std::ostream& out);
int cmd_inject(const RunConfig& c, std::ostream& out);
int cmd_label(const RunConfig& c, std::ostream& out);
int cmd_calibrate(const RunConfig& c, std::ostream& out);
int cmd_denoise(const RunConfig& c, std::ostream& out);
int cmd_train(const RunConfig& c, std::ostream& out);
int cmd_bench(const RunConfig& c, std::ostream& out);
int cmd_report(const RunConfig& c, std::ostream& out);

}  // namespace epmbench::cli
