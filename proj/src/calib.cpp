#include "epmbench/calib.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "epmbench/bench.hpp"
#include "epmbench/parallel.hpp"

namespace epmbench::calib {

const char* to_string(Convergence c) {
  switch (c) {
    case Convergence::Converged: return "converged";
    case Convergence::NonUnimodal: return "non_unimodal";
    case Convergence::Degenerate: return "degenerate";
  }
  return "unknown";
}

double dataset_max_aps(const std::vector<Recording>& dataset) {
  double m = 0.0;
  for (const auto& rec : dataset) {
    for (const auto& fr : rec.aps.frames) {
      for (double v : fr.values.data()) m = std::max(m, v);
    }
  }
  return m;
}

namespace {

struct WindowJob {
  const Recording* rec;
  const ApsFrame* frame;
};

std::vector<WindowJob> jobs_of(const std::vector<Recording>& dataset) {
  std::vector<WindowJob> jobs;
  for (const auto& rec : dataset) {
    if (rec.aps.frames.empty()) continue;
    for (const auto& fr : rec.aps.frames) jobs.push_back({&rec, &fr});
  }
  if (jobs.empty()) throw Error(ErrorCode::EmptyInput, "dataset has no exposure windows");
  return jobs;
}

}  // namespace

double likelihood(const std::vector<Recording>& dataset, double eps_pos, double eps_neg, double offset,
                  const epm::EpmOptions& options, int threads) {
  epm::DvsParams params{eps_pos, eps_neg, offset};
  params.validate();
  auto jobs = jobs_of(dataset);
  std::vector<double> lp(jobs.size(), 0.0);
  std::vector<std::size_t> valid(jobs.size(), 0);
  parallel_for(jobs.size(), threads, [&](std::size_t i) {
    const auto& job = jobs[i];
    EpmFrame m = epm::epm_frame(*job.frame, job.rec->imu, job.rec->intrinsics, params, options);
    valid[i] = m.valid_count();
    if (valid[i] == 0) return;
    lp[i] = bench::log_prob(event_indicator(job.rec->events, job.frame->exposure()), m);
  });
  std::size_t n = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    n += valid[i];
    sum += lp[i];
  }
  if (n == 0) throw Error(ErrorCode::Degenerate, "no valid EPM pixel at offset " + std::to_string(offset));
  return sum;
}

Objective::Objective(const std::vector<Recording>& dataset, const epm::EpmOptions& options, int threads)
    : threads_(threads) {
  auto jobs = jobs_of(dataset);
  max_aps_ = dataset_max_aps(dataset);
  windows_.resize(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t i) {
    const auto& job = jobs[i];
    epm::EpmBasis b = epm::prepare_basis(*job.frame, job.rec->imu, job.rec->intrinsics, options);
    EventIndicatorFrame e = event_indicator(job.rec->events, job.frame->exposure());
    WindowData& w = windows_[i];
    w.tau_s = to_seconds(job.frame->tau);
    w.floor = b.floor;
    for (std::size_t p = 0; p < b.aps.size(); ++p) {
      if (!b.static_valid[p]) continue;
      w.aps.push_back(b.aps[p]);
      w.motion.push_back(b.motion_term[p]);
      w.hit.push_back(e.values[p]);
    }
  });
  for (const auto& w : windows_) pixels_ += w.aps.size();
  if (pixels_ == 0) {
    throw Error(ErrorCode::Degenerate, "no interior unsaturated pixel in any exposure window");
  }
}

Objective::Split Objective::evaluate(double eps_pos, double eps_neg, double offset) const {
  std::vector<Split> parts(windows_.size());
  const double lo = bench::kClampDelta;
  const double hi = 1.0 - bench::kClampDelta;
  parallel_for(windows_.size(), threads_, [&](std::size_t i) {
    const WindowData& w = windows_[i];
    Split s;
    const double kp = w.tau_s / eps_pos;
    const double kn = w.tau_s / eps_neg;
    for (std::size_t p = 0; p < w.aps.size(); ++p) {
      double denom = w.aps[p] - offset;
      double m;
      double* acc;
      if (denom < w.floor) {
        // A - O -> 0+ drives |J_t| to infinity; keep the limit M = 1 so the pixel set
        // stays fixed across candidate offsets.
        m = w.motion[p] == 0.0 ? 0.0 : 1.0;
        acc = w.motion[p] < 0.0 ? &s.pos : (w.motion[p] > 0.0 ? &s.neg : &s.zero);
      } else if (double jt = -w.motion[p] / denom; jt > 0.0) {
        m = std::min(jt * kp, 1.0);
        acc = &s.pos;
      } else if (jt < 0.0) {
        m = std::min(-jt * kn, 1.0);
        acc = &s.neg;
      } else {
        m = 0.0;
        acc = &s.zero;
      }
      m = std::clamp(m, lo, hi);
      *acc += w.hit[p] ? std::log(m) : std::log1p(-m);
    }
    parts[i] = s;
  });
  Split total;
  for (const auto& s : parts) {
    total.pos += s.pos;
    total.neg += s.neg;
    total.zero += s.zero;
  }
  return total;
}

namespace {

struct Search1D {
  double x = 0.0;
  double value = 0.0;
  bool flat = false;
  bool multimodal = false;
};

constexpr double kInvPhi = 0.6180339887498949;

/// Maximizes f on [lo, hi]: coarse prescan, then golden-section inside the bracket
/// around the best prescan point until the bracket is narrower than tol.
Search1D maximize(const std::function<double(double)>& f, double lo, double hi, int prescan, double tol) {
  const int n = std::max(prescan, 3);
  std::vector<double> xs(n), fs(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = lo + (hi - lo) * i / (n - 1);
    fs[i] = f(xs[i]);
  }
  auto [mn, mx] = std::minmax_element(fs.begin(), fs.end());
  Search1D out;
  int best = static_cast<int>(mx - fs.begin());
  out.x = xs[best];
  out.value = fs[best];
  const double scale = 1e-12 * (1.0 + std::abs(*mx));
  if (*mx - *mn <= scale) {
    out.flat = true;
    return out;
  }
  int peaks = 0;
  for (int i = 0; i < n; ++i) {
    bool left = i == 0 || fs[i] > fs[i - 1] + scale;
    bool right = i == n - 1 || fs[i] > fs[i + 1] + scale;
    if (left && right) ++peaks;
  }
  out.multimodal = peaks > 1;

  double a = xs[std::max(best - 1, 0)];
  double b = xs[std::min(best + 1, n - 1)];
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  if (fc > out.value) {
    out.x = c;
    out.value = fc;
  }
  if (fd > out.value) {
    out.x = d;
    out.value = fd;
  }
  return out;
}

}  // namespace

CalibrationResult calibrate(const std::vector<Recording>& dataset, const SearchConfig& cfg) {
  if (!(cfg.eps_min > 0.0) || !(cfg.eps_max > cfg.eps_min)) {
    throw Error(ErrorCode::InvalidArgument, "threshold search range must satisfy 0 < eps_min < eps_max");
  }
  if (!(cfg.offset_max_frac > cfg.offset_min_frac)) {
    throw Error(ErrorCode::InvalidArgument, "offset search range is empty");
  }
  if (!(cfg.rel_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");

  const double max_a = dataset_max_aps(dataset);
  CalibrationResult res;
  res.offset_min = cfg.offset_min_frac * max_a;
  res.offset_max = cfg.offset_max_frac * max_a;
  Objective obj(dataset, cfg.epm, cfg.threads);
  res.evaluated_pixels = obj.pixel_count();

  const double eps_tol = cfg.rel_tol * (cfg.eps_max - cfg.eps_min);
  const double off_tol = cfg.rel_tol * std::max(res.offset_max - res.offset_min, 1e-12);
  struct Inner {
    Search1D pos, neg;
    double zero = 0.0;
    double total() const { return pos.value + neg.value + zero; }
  };
  auto inner = [&](double offset) {
    Inner r;
    r.pos = maximize([&](double e) { return obj.evaluate(e, 1.0, offset).pos; }, cfg.eps_min, cfg.eps_max,
                     cfg.prescan, eps_tol);
    r.neg = maximize([&](double e) { return obj.evaluate(1.0, e, offset).neg; }, cfg.eps_min, cfg.eps_max,
                     cfg.prescan, eps_tol);
    r.zero = obj.evaluate(1.0, 1.0, offset).zero;
    return r;
  };

  auto profile = [&](double offset) {
    Inner r = inner(offset);
    res.trace.push_back({r.pos.x, r.neg.x, offset, r.total()});
    return r.total();
  };

  Search1D outer;
  if (res.offset_max > res.offset_min) {
    outer = maximize(profile, res.offset_min, res.offset_max, cfg.prescan, off_tol);
  } else {
    outer.x = 0.0;
    outer.value = profile(0.0);
    outer.flat = true;
  }
  Inner best = inner(outer.x);
  res.offset = outer.x;
  res.eps_pos = best.pos.x;
  res.eps_neg = best.neg.x;
  res.log_likelihood = best.total();

  if (best.pos.flat && best.neg.flat) {
    res.convergence = Convergence::Degenerate;
    res.warnings.push_back("likelihood is flat in both thresholds; the data carry no information");
  } else if (outer.multimodal || best.pos.multimodal || best.neg.multimodal) {
    res.convergence = Convergence::NonUnimodal;
    res.warnings.push_back("prescan found more than one local maximum; returning the best point found");
  }
  if (best.pos.flat != best.neg.flat) {
    res.warnings.push_back(std::string("likelihood is flat in ") + (best.pos.flat ? "eps_pos" : "eps_neg"));
  }
  return res;
}

}  // namespace epmbench::calib
