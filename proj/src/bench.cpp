#include "epmbench/bench.hpp"

#include <algorithm>
#include <cmath>

#include "epmbench/parallel.hpp"

namespace epmbench::bench {

namespace {

void check_geometry(const EventIndicatorFrame& e, const EpmFrame& m) {
  if (e.values.geometry() != m.values.geometry() || m.valid.geometry() != m.values.geometry()) {
    throw Error(ErrorCode::GeometryMismatch, "indicator and EPM frames differ in size");
  }
}

}  // namespace

double log_prob(const EventIndicatorFrame& e, const EpmFrame& m) {
  check_geometry(e, m);
  double sum = 0.0;
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    if (!m.valid[i]) continue;
    double p = std::clamp(m.values[i], kClampDelta, 1.0 - kClampDelta);
    sum += e.values[i] ? std::log(p) : std::log1p(-p);
  }
  return sum;
}

EventIndicatorFrame e_opt(const EpmFrame& m) {
  EventIndicatorFrame out{m.window, Grid<std::uint8_t>(m.values.geometry(), 0)};
  for (std::size_t i = 0; i < m.values.size(); ++i) out.values[i] = (m.valid[i] && m.values[i] > 0.5) ? 1 : 0;
  return out;
}

double rpmd(const EventIndicatorFrame& e, const EpmFrame& m) {
  check_geometry(e, m);
  std::size_t n = m.valid_count();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "EPM frame has no valid pixels");
  return (log_prob(e_opt(m), m) - log_prob(e, m)) / static_cast<double>(n);
}

std::size_t BenchmarkReport::total_valid() const {
  std::size_t n = 0;
  for (const auto& w : windows) n += w.valid;
  return n;
}

BenchmarkReport bench_method(const EventStream& denoised, const std::vector<EpmFrame>& epm,
                             const std::vector<Window>& windows, const std::string& method, int threads) {
  if (windows.empty() || epm.size() != windows.size()) {
    throw Error(ErrorCode::InvalidArgument, "need one EPM frame per window, got " + std::to_string(epm.size()) +
                                                " frames for " + std::to_string(windows.size()) + " windows");
  }
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (!(epm[i].window == windows[i])) {
      throw Error(ErrorCode::InvalidArgument, "EPM frame " + std::to_string(i) + " is not aligned to its window");
    }
    if (epm[i].values.geometry() != denoised.geometry()) {
      throw Error(ErrorCode::GeometryMismatch, "EPM frame " + std::to_string(i) + " geometry differs from stream");
    }
  }

  std::vector<WindowScore> scores(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t i) {
    const EpmFrame& m = epm[i];
    WindowScore s;
    s.window = windows[i];
    s.valid = m.valid_count();
    auto [lo, hi] = slice_range(denoised, windows[i].start, windows[i].end());
    s.events = hi - lo;
    if (s.valid > 0) {
      EventIndicatorFrame e = event_indicator(denoised, windows[i]);
      s.log_prob = log_prob(e, m);
      s.log_prob_opt = log_prob(e_opt(m), m);
      s.rpmd = (s.log_prob_opt - s.log_prob) / static_cast<double>(s.valid);
    }
    scores[i] = s;
  });

  BenchmarkReport report;
  report.method = method;
  double num = 0.0;
  std::size_t den = 0;
  for (auto& s : scores) {
    if (s.valid == 0) continue;
    num += s.rpmd * static_cast<double>(s.valid);
    den += s.valid;
    report.windows.push_back(s);
  }
  if (den == 0) throw Error(ErrorCode::EmptyInput, "no window has a valid EPM pixel");
  report.aggregate = num / static_cast<double>(den);
  return report;
}

}  // namespace epmbench::bench
