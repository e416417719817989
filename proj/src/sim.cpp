#include "epmbench/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Geometry>

#include "epmbench/parallel.hpp"
#include "epmbench/rng.hpp"

namespace epmbench::sim {

namespace {

constexpr double kTwoPi = 6.283185307179586;

Eigen::Matrix3d exp_so3(const Eigen::Vector3d& phi) {
  double angle = phi.norm();
  if (angle < 1e-15) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, phi / angle).toRotationMatrix();
}

double poly_eval(const std::vector<double>& c, double s) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * s + *it;
  return acc;
}

double poly_antiderivative(const std::vector<double>& c, double s) {
  double acc = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) acc = acc * s + c[i] / static_cast<double>(i + 1);
  return acc * s;
}

double soft_square(double z, double period, double sharpness) {
  return std::tanh(sharpness * std::sin(kTwoPi * z / period)) / std::tanh(sharpness);
}

// 4-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 4> kGlNodes{-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                         0.8611363115940526};
constexpr std::array<double, 4> kGlWeights{0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                           0.3478548451374538};

double log_intensity_from_radiance(const SensorParams& p, double log_radiance) {
  if (p.b == 0.0) return std::log(p.a) + log_radiance;
  return std::log(p.a * std::exp(log_radiance) + p.b);
}

}  // namespace

const char* to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::Checkerboard: return "checkerboard";
    case SceneKind::Sinusoid: return "sinusoid";
    case SceneKind::LinearRamp: return "linear-ramp";
    case SceneKind::GaussianBlobs: return "gaussian-blobs";
  }
  return "unknown";
}

SceneKind scene_kind_from_string(const std::string& name) {
  if (name == "checkerboard") return SceneKind::Checkerboard;
  if (name == "sinusoid") return SceneKind::Sinusoid;
  if (name == "linear-ramp") return SceneKind::LinearRamp;
  if (name == "gaussian-blobs") return SceneKind::GaussianBlobs;
  throw Error(ErrorCode::InvalidArgument, "unknown scene kind '" + name + "'");
}

void Scene::validate() const {
  if (!(period > 0.0) || !std::isfinite(period)) throw Error(ErrorCode::InvalidArgument, "scene period must be > 0");
  if (!std::isfinite(amplitude) || !std::isfinite(base) || !std::isfinite(orientation)) {
    throw Error(ErrorCode::InvalidArgument, "scene parameters must be finite");
  }
  if (kind == SceneKind::Checkerboard && !(sharpness > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "checkerboard sharpness must be > 0");
  }
  if (kind == SceneKind::GaussianBlobs && !(blob_sigma > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "blob sigma must be > 0");
  }
}

double Scene::log_radiance(const Eigen::Vector3d& d) const {
  double u = std::atan2(d.x(), d.z());
  double w = std::atan2(d.y(), std::hypot(d.x(), d.z()));
  double c = std::cos(orientation);
  double s = std::sin(orientation);
  double along = u * c + w * s;
  double across = -u * s + w * c;
  switch (kind) {
    case SceneKind::Sinusoid:
      return base + amplitude * std::sin(kTwoPi * along / period);
    case SceneKind::LinearRamp:
      return base + amplitude * along / period;
    case SceneKind::Checkerboard:
      return base + amplitude * soft_square(along, period, sharpness) * soft_square(across, period, sharpness);
    case SceneKind::GaussianBlobs: {
      double sigma = blob_sigma * period;
      double inv = 1.0 / (2.0 * sigma * sigma);
      double i0 = std::floor(along / period);
      double j0 = std::floor(across / period);
      double acc = 0.0;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          double ca = (i0 + di + 0.5) * period;
          double cb = (j0 + dj + 0.5) * period;
          double r2 = (along - ca) * (along - ca) + (across - cb) * (across - cb);
          acc += std::exp(-r2 * inv);
        }
      }
      return base + amplitude * acc;
    }
  }
  return base;
}

MotionProfile::MotionProfile(std::vector<Segment> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) throw Error(ErrorCode::EmptyInput, "motion profile needs at least one segment");
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    if (s.t1 <= s.t0) throw Error(ErrorCode::InvalidArgument, "motion segment " + std::to_string(i) + " is empty");
    if (i > 0 && s.t0 != segments_[i - 1].t1) {
      throw Error(ErrorCode::InvalidArgument, "motion segments must be contiguous");
    }
    for (const auto& axis : s.coeffs) {
      for (double c : axis) {
        if (!std::isfinite(c)) throw Error(ErrorCode::InvalidArgument, "motion coefficients must be finite");
      }
    }
  }
  build_table();
}

MotionProfile MotionProfile::constant(const Eigen::Vector3d& theta, Timestamp begin, Timestamp end) {
  Segment s{begin, end, {std::vector<double>{theta.x()}, {theta.y()}, {theta.z()}}};
  return MotionProfile({s});
}

MotionProfile MotionProfile::linear(const Eigen::Vector3d& theta_begin, const Eigen::Vector3d& theta_end,
                                    Timestamp begin, Timestamp end) {
  double span = to_seconds(end - begin);
  if (!(span > 0.0)) throw Error(ErrorCode::InvalidArgument, "motion span must be positive");
  Eigen::Vector3d slope = (theta_end - theta_begin) / span;
  Segment s{begin, end, {}};
  for (int a = 0; a < 3; ++a) s.coeffs[a] = {theta_begin[a], slope[a]};
  return MotionProfile({s});
}

std::size_t MotionProfile::segment_index(double t_us) const {
  auto it = std::upper_bound(segments_.begin(), segments_.end(), t_us,
                             [](double t, const Segment& s) { return t < static_cast<double>(s.t0); });
  if (it == segments_.begin()) return 0;
  return std::min<std::size_t>(static_cast<std::size_t>(it - segments_.begin()) - 1, segments_.size() - 1);
}

Eigen::Vector3d MotionProfile::theta(double t_us) const {
  if (!covers(t_us)) throw Error(ErrorCode::OutOfRange, "time outside motion domain");
  const Segment& s = segments_[segment_index(t_us)];
  double local = (t_us - static_cast<double>(s.t0)) / kMicrosPerSecond;
  return {poly_eval(s.coeffs[0], local), poly_eval(s.coeffs[1], local), poly_eval(s.coeffs[2], local)};
}

Eigen::Vector3d MotionProfile::integral(double ta_us, double tb_us) const {
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  double sign = 1.0;
  if (tb_us < ta_us) {
    std::swap(ta_us, tb_us);
    sign = -1.0;
  }
  for (std::size_t i = segment_index(ta_us); i < segments_.size(); ++i) {
    const Segment& s = segments_[i];
    double lo = std::max(ta_us, static_cast<double>(s.t0));
    double hi = std::min(tb_us, static_cast<double>(s.t1));
    if (hi <= lo) {
      if (static_cast<double>(s.t0) >= tb_us) break;
      continue;
    }
    double slo = (lo - static_cast<double>(s.t0)) / kMicrosPerSecond;
    double shi = (hi - static_cast<double>(s.t0)) / kMicrosPerSecond;
    for (int a = 0; a < 3; ++a) {
      acc[a] += poly_antiderivative(s.coeffs[a], shi) - poly_antiderivative(s.coeffs[a], slo);
    }
  }
  return sign * acc;
}

void MotionProfile::build_table() {
  Timestamp span = end() - begin();
  std::size_t n = static_cast<std::size_t>(span / table_step_) + 2;
  table_.resize(n);
  table_[0] = Eigen::Matrix3d::Identity();
  for (std::size_t i = 1; i < n; ++i) {
    double ta = static_cast<double>(begin() + static_cast<Timestamp>(i - 1) * table_step_);
    double tb = ta + static_cast<double>(table_step_);
    table_[i] = exp_so3(integral(ta, tb)) * table_[i - 1];
  }
}

Eigen::Matrix3d MotionProfile::rotation(double t_us) const {
  if (!covers(t_us)) throw Error(ErrorCode::OutOfRange, "time outside motion domain");
  double rel = t_us - static_cast<double>(begin());
  auto n = static_cast<std::size_t>(std::floor(rel / static_cast<double>(table_step_)));
  n = std::min(n, table_.size() - 1);
  double tn = static_cast<double>(begin()) + static_cast<double>(n) * static_cast<double>(table_step_);
  return exp_so3(integral(tn, t_us)) * table_[n];
}

void SensorParams::validate() const {
  if (!(eps_pos > 0.0) || !(eps_neg > 0.0)) throw Error(ErrorCode::InvalidArgument, "thresholds must be > 0");
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be > 0");
  if (!(a > 0.0)) throw Error(ErrorCode::InvalidArgument, "log-amplifier gain a must be > 0");
  if (tau <= 0 || tau >= eta) throw Error(ErrorCode::InvalidArgument, "exposure must satisfy 0 < tau < eta");
  if (!(full_scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "full scale must be > 0");
}

double SensorParams::offset() const { return beta - alpha * to_seconds(tau) * b / a; }

void NoiseSpec::validate() const {
  if (!(ba_rate >= 0.0) || !std::isfinite(ba_rate)) throw Error(ErrorCode::InvalidArgument, "ba_rate must be >= 0");
  if (!(hole_prob >= 0.0 && hole_prob <= 1.0)) throw Error(ErrorCode::InvalidArgument, "hole_prob must be in [0,1]");
  if (!(jitter_sigma >= 0.0) || !(count_gain_sigma >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "noise sigmas must be >= 0");
  }
}

Eigen::Vector3d pixel_ray(const CameraIntrinsics& k, double x, double y) {
  double yn = (y - k.cy) / k.f;
  double xn = (x - k.cx - k.kappa * yn) / k.f;
  return Eigen::Vector3d(xn, yn, 1.0).normalized();
}

double sample_radiance(const Scene& scene, const MotionProfile& motion, const Rig& rig, double x, double y,
                       double t_us) {
  Eigen::Vector3d world = motion.rotation(t_us).transpose() * pixel_ray(rig.intrinsics, x, y);
  return std::exp(scene.log_radiance(world));
}

double sample_log_intensity(const Scene& scene, const MotionProfile& motion, const Rig& rig, double x, double y,
                            double t_us) {
  Eigen::Vector3d world = motion.rotation(t_us).transpose() * pixel_ray(rig.intrinsics, x, y);
  return log_intensity_from_radiance(rig.params, scene.log_radiance(world));
}

namespace {

struct PixelDvs {
  const Scene& scene;
  const MotionProfile& motion;
  const SensorParams& params;
  const DvsOptions& options;
  Eigen::Vector3d ray;
  std::uint16_t x, y;
  double ref;
  double eps_pos, eps_neg;
  double guard;  // max |dJ| per integration step
  std::mt19937_64 rng;
  std::vector<Event>& out;

  double j_at(const Eigen::Matrix3d& q) const {
    return log_intensity_from_radiance(params, scene.log_radiance(q.transpose() * ray));
  }

  double draw_gain() {
    if (options.count_gain_sigma <= 0.0) return 1.0;
    double s = options.count_gain_sigma;
    return std::exp(s * standard_normal(rng) - 0.5 * s * s);
  }

  void emit(double t_us, std::int8_t p) {
    out.push_back(Event{static_cast<Timestamp>(std::llround(t_us)), x, y, p});
  }

  double crossing_time(double ta, double ja, double tb, double jb, double level) const {
    double frac = std::clamp((level - ja) / (jb - ja), 0.0, 1.0);
    return ta + frac * (tb - ta);
  }

  void crossings(double ta, double ja, double tb, double jb) {
    while (jb - ref >= eps_pos) {
      double level = ref + eps_pos;
      emit(crossing_time(ta, ja, tb, jb, level), 1);
      ref = level;
      eps_pos = params.eps_pos * draw_gain();
    }
    while (ref - jb >= eps_neg) {
      double level = ref - eps_neg;
      emit(crossing_time(ta, ja, tb, jb, level), -1);
      ref = level;
      eps_neg = params.eps_neg * draw_gain();
    }
  }

  void advance(double ta, double ja, double tb, double jb, int depth) {
    if (std::abs(jb - ja) < guard) {
      crossings(ta, ja, tb, jb);
      return;
    }
    if (depth >= options.max_subdivisions) {
      std::ostringstream os;
      os << "time step too coarse at pixel (" << x << "," << y << ") t=" << ta << "us: |dJ|=" << std::abs(jb - ja)
         << " exceeds " << guard << " after " << depth << " subdivisions";
      throw Error(ErrorCode::StepTooCoarse, os.str());
    }
    double tm = 0.5 * (ta + tb);
    double jm = j_at(motion.rotation(tm));
    advance(ta, ja, tm, jm, depth + 1);
    advance(tm, jm, tb, jb, depth + 1);
  }
};

}  // namespace

EventStream ideal_dvs(const Scene& scene, const MotionProfile& motion, const Rig& rig, const DvsOptions& options) {
  scene.validate();
  rig.geometry.validate();
  rig.intrinsics.validate();
  rig.params.validate();
  if (options.step_dt <= 0) throw Error(ErrorCode::InvalidArgument, "step_dt must be positive");

  const Timestamp begin = motion.begin();
  const Timestamp end = motion.end();
  std::vector<double> times;
  for (Timestamp t = begin; t < end; t += options.step_dt) times.push_back(static_cast<double>(t));
  times.push_back(static_cast<double>(end));
  std::vector<Eigen::Matrix3d> rotations(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) rotations[i] = motion.rotation(times[i]);

  const auto& g = rig.geometry;
  const double guard = 0.25 * std::min(rig.params.eps_pos, rig.params.eps_neg);
  std::vector<std::vector<Event>> per_row(static_cast<std::size_t>(g.height));

  parallel_for(static_cast<std::size_t>(g.height), options.threads, [&](std::size_t row) {
    auto& out = per_row[row];
    for (int x = 0; x < g.width; ++x) {
      std::size_t pixel = g.index(x, static_cast<int>(row));
      PixelDvs px{scene,
                  motion,
                  rig.params,
                  options,
                  pixel_ray(rig.intrinsics, x, static_cast<double>(row)),
                  static_cast<std::uint16_t>(x),
                  static_cast<std::uint16_t>(row),
                  0.0,
                  rig.params.eps_pos,
                  rig.params.eps_neg,
                  guard,
                  make_rng(options.seed, pixel),
                  out};
      px.eps_pos *= px.draw_gain();
      px.eps_neg *= px.draw_gain();
      double jprev = px.j_at(rotations[0]);
      px.ref = jprev;
      for (std::size_t i = 1; i < times.size(); ++i) {
        double jcur = px.j_at(rotations[i]);
        px.advance(times[i - 1], jprev, times[i], jcur, 0);
        jprev = jcur;
      }
    }
  });

  std::vector<Event> all;
  std::size_t total = 0;
  for (const auto& r : per_row) total += r.size();
  all.reserve(total);
  for (auto& r : per_row) all.insert(all.end(), r.begin(), r.end());
  return EventStream::from_unsorted(g, std::move(all));
}

ApsFrame render_aps_frame(const Scene& scene, const MotionProfile& motion, const Rig& rig, std::int64_t k,
                          Timestamp start_t, const ApsOptions& options) {
  const auto& p = rig.params;
  if (options.subintervals <= 0) throw Error(ErrorCode::InvalidArgument, "quadrature needs >= 1 subinterval");
  if (!motion.covers(static_cast<double>(start_t)) || !motion.covers(static_cast<double>(start_t + p.tau))) {
    throw Error(ErrorCode::OutOfRange, "exposure outside motion domain");
  }
  const double tau_us = static_cast<double>(p.tau);
  const double h = tau_us / options.subintervals;
  std::vector<Eigen::Matrix3d> rot;
  std::vector<double> weight;
  for (int s = 0; s < options.subintervals; ++s) {
    double mid = static_cast<double>(start_t) + (s + 0.5) * h;
    for (int q = 0; q < 4; ++q) {
      rot.push_back(motion.rotation(mid + 0.5 * h * kGlNodes[q]).transpose());
      weight.push_back(0.5 * h * kGlWeights[q] / kMicrosPerSecond);  // integrate in seconds
    }
  }
  const auto& g = rig.geometry;
  ApsFrame frame{k, start_t, p.tau, Grid<double>(g, 0.0)};
  parallel_for(static_cast<std::size_t>(g.height), options.threads, [&](std::size_t row) {
    for (int x = 0; x < g.width; ++x) {
      Eigen::Vector3d ray = pixel_ray(rig.intrinsics, x, static_cast<double>(row));
      double acc = 0.0;
      for (std::size_t n = 0; n < rot.size(); ++n) acc += weight[n] * std::exp(scene.log_radiance(rot[n] * ray));
      double a = p.alpha * acc + p.beta;
      frame.values(x, static_cast<int>(row)) = std::clamp(a, 0.0, p.full_scale);
    }
  });
  return frame;
}

ApsSequence synth_aps(const Scene& scene, const MotionProfile& motion, const Rig& rig, const ApsOptions& options) {
  rig.params.validate();
  if (options.start_offset < 0) throw Error(ErrorCode::InvalidArgument, "APS start offset must be >= 0");
  ApsSequence seq{rig.geometry, {}, rig.params.eta};
  for (std::int64_t k = 0;; ++k) {
    Timestamp start = motion.begin() + options.start_offset + k * rig.params.eta;
    if (start + rig.params.tau > motion.end()) break;
    seq.frames.push_back(render_aps_frame(scene, motion, rig, k, start, options));
  }
  return seq;
}

ImuTrace synth_imu(const MotionProfile& motion, double rate) {
  if (!(rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "IMU rate must be > 0");
  ImuTrace trace;
  trace.rate = rate;
  double span = to_seconds(motion.end() - motion.begin());
  auto n = static_cast<std::size_t>(std::floor(span * rate + 1e-9));
  trace.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Timestamp t = motion.begin() + std::llround(static_cast<double>(i) * kMicrosPerSecond / rate);
    trace.samples.push_back(ImuSample{t, motion.theta(static_cast<double>(t))});
  }
  return trace;
}

LabeledStream all_signal(EventStream stream) {
  std::vector<std::uint8_t> tags(stream.size(), 1);
  return {std::move(stream), std::move(tags)};
}

LabeledStream inject_noise(const EventStream& input, const NoiseSpec& spec, const Window& span) {
  return inject_noise(all_signal(input), spec, span);
}

LabeledStream inject_noise(const LabeledStream& input, const NoiseSpec& spec, const Window& span) {
  spec.validate();
  if (input.is_signal.size() != input.stream.size()) {
    throw Error(ErrorCode::InvalidArgument, "provenance tags do not match stream length");
  }
  const auto& g = input.stream.geometry();
  std::vector<Event> events;
  std::vector<std::uint8_t> tags;
  events.reserve(input.stream.size());
  tags.reserve(input.stream.size());

  auto rng_holes = make_rng(spec.rng_seed, 0x401e5);
  auto rng_jitter = make_rng(spec.rng_seed, 0x717e2);
  for (std::size_t i = 0; i < input.stream.size(); ++i) {
    Event e = input.stream[i];
    if (spec.hole_prob > 0.0 && input.is_signal[i] && uniform01(rng_holes) < spec.hole_prob) continue;
    if (spec.jitter_sigma > 0.0) {
      double z = std::clamp(standard_normal(rng_jitter), -3.0, 3.0);
      e.t = std::max<Timestamp>(0, e.t + std::llround(z * spec.jitter_sigma));
    }
    events.push_back(e);
    tags.push_back(input.is_signal[i]);
  }

  if (spec.ba_rate > 0.0 && span.length > 0) {
    const double mean_gap_us = kMicrosPerSecond / spec.ba_rate;
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        auto rng = make_rng(spec.rng_seed, 0x1000000ull + g.index(x, y));
        double t = static_cast<double>(span.start);
        for (;;) {
          t += -std::log(1.0 - uniform01(rng)) * mean_gap_us;
          if (t >= static_cast<double>(span.end())) break;
          std::int8_t p = (rng() >> 63) ? 1 : -1;
          events.push_back(Event{static_cast<Timestamp>(std::floor(t)), static_cast<std::uint16_t>(x),
                                 static_cast<std::uint16_t>(y), p});
          tags.push_back(0);
        }
      }
    }
  }

  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return events[a].t < events[b].t; });
  std::vector<Event> sorted(events.size());
  std::vector<std::uint8_t> sorted_tags(events.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    sorted[i] = events[order[i]];
    sorted_tags[i] = tags[order[i]];
  }
  return {EventStream(g, std::move(sorted)), std::move(sorted_tags)};
}

}  // namespace epmbench::sim
