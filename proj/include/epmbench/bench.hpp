#pragma once

#include <string>
#include <vector>

#include "epmbench/core.hpp"

namespace epmbench::bench {

/// Probability clamp applied before taking logs.
inline constexpr double kClampDelta = 1e-6;

/// Sum over valid pixels of E log M + (1 - E) log(1 - M) with M clamped to [delta, 1 - delta].
double log_prob(const EventIndicatorFrame& e, const EpmFrame& m);

/// 1 where M > 0.5 (strict), else 0. Invalid pixels are 0.
EventIndicatorFrame e_opt(const EpmFrame& m);

/// (log_prob(e_opt(M)) - log_prob(E)) / N over the N valid pixels.
double rpmd(const EventIndicatorFrame& e, const EpmFrame& m);

struct WindowScore {
  Window window;
  double rpmd = 0.0;
  double log_prob = 0.0;
  double log_prob_opt = 0.0;
  std::size_t valid = 0;
  std::size_t events = 0;
};

struct BenchmarkReport {
  std::string method;
  std::string scene;
  std::vector<std::pair<std::string, std::string>> parameters;
  std::vector<WindowScore> windows;
  double aggregate = 0.0;  // valid-pixel-weighted mean of per-window RPMD

  std::size_t total_valid() const;
};

/// Scores a denoised stream against one EPM frame per window. Windows must match the
/// EPM frames one-to-one; windows with no valid pixels are skipped.
BenchmarkReport bench_method(const EventStream& denoised, const std::vector<EpmFrame>& epm,
                             const std::vector<Window>& windows, const std::string& method, int threads = 1);

}  // namespace epmbench::bench
