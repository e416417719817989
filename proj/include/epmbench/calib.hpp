#pragma once

#include <string>
#include <vector>

#include "epmbench/core.hpp"
#include "epmbench/epm.hpp"

namespace epmbench::calib {

/// Sum over recordings and exposure windows of log_prob(raw indicator, EPM(eps, O)).
/// Throws Degenerate if no pixel is valid at this offset.
double likelihood(const std::vector<Recording>& dataset, double eps_pos, double eps_neg, double offset,
                  const epm::EpmOptions& options = {}, int threads = 1);

struct SearchConfig {
  double eps_min = 0.05;
  double eps_max = 1.0;
  /// Offset bounds as fractions of the largest APS value in the dataset.
  double offset_min_frac = -0.5;
  double offset_max_frac = 0.5;
  double rel_tol = 1e-3;  // final bracket width relative to the search range
  int prescan = 8;
  int threads = 1;
  epm::EpmOptions epm;
};

enum class Convergence { Converged, NonUnimodal, Degenerate };
const char* to_string(Convergence c);

struct TracePoint {
  double eps_pos;
  double eps_neg;
  double offset;
  double log_likelihood;
};

struct CalibrationResult {
  double eps_pos = 0.0;
  double eps_neg = 0.0;
  double offset = 0.0;
  double log_likelihood = 0.0;
  double offset_min = 0.0;
  double offset_max = 0.0;
  std::size_t evaluated_pixels = 0;
  Convergence convergence = Convergence::Converged;
  std::vector<TracePoint> trace;  // outer-loop evaluations, each at its inner optimum
  std::vector<std::string> warnings;
};

/// Precomputed per-window data for fast repeated evaluation. Every interior, unsaturated
/// pixel is scored at every candidate offset; where A - O falls below the floor the
/// pixel takes the limiting value M = 1 instead of dropping out.
class Objective {
 public:
  explicit Objective(const std::vector<Recording>& dataset, const epm::EpmOptions& options = {}, int threads = 1);

  struct Split {
    double pos = 0.0;   // pixels with J_t > 0
    double neg = 0.0;   // pixels with J_t < 0
    double zero = 0.0;  // J_t == 0, independent of eps
  };

  /// Per-sign partial log-likelihoods at (eps_pos, eps_neg, offset).
  Split evaluate(double eps_pos, double eps_neg, double offset) const;
  double operator()(double eps_pos, double eps_neg, double offset) const {
    Split s = evaluate(eps_pos, eps_neg, offset);
    return s.pos + s.neg + s.zero;
  }

  std::size_t pixel_count() const { return pixels_; }
  double max_aps() const { return max_aps_; }

 private:
  struct WindowData {
    std::vector<double> aps;
    std::vector<double> motion;  // tau * (A_x|v_x|v_x + A_y|v_y|v_y), already masked
    std::vector<std::uint8_t> hit;
    double tau_s = 0.0;
    double floor = 0.0;
  };
  std::vector<WindowData> windows_;
  std::size_t pixels_ = 0;
  double max_aps_ = 0.0;
  int threads_ = 1;
};

/// Largest APS value over all frames of the dataset.
double dataset_max_aps(const std::vector<Recording>& dataset);

/// Outer golden-section over O, inner golden-section over eps_pos and eps_neg
/// (independent, split by the sign of J_t), each preceded by a coarse prescan.
CalibrationResult calibrate(const std::vector<Recording>& dataset, const SearchConfig& cfg = {});

}  // namespace epmbench::calib
