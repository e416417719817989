#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "epmbench/core.hpp"

namespace epmbench::sim {

enum class SceneKind { Checkerboard, Sinusoid, LinearRamp, GaussianBlobs };

const char* to_string(SceneKind kind);
SceneKind scene_kind_from_string(const std::string& name);

/// A static panorama: log-radiance as a function of world viewing direction. Angular
/// coordinates are azimuth u = atan2(d.x, d.z) and elevation w = atan2(d.y, |d.xz|),
/// both in radians, so a rotation-only camera sees exact, occlusion-free flow.
struct Scene {
  SceneKind kind = SceneKind::Sinusoid;
  double period = 0.04;       // rad, one full cycle (lattice spacing for blobs)
  double amplitude = 0.5;     // log-radiance units
  double orientation = 0.0;   // rad, direction of variation in the (u, w) plane
  double base = 0.0;          // log-radiance offset
  double sharpness = 1.5;     // checkerboard edge steepness (tanh gain)
  double blob_sigma = 0.15;   // blob radius as a fraction of period

  void validate() const;
  double log_radiance(const Eigen::Vector3d& world_dir) const;
};

/// Piecewise-polynomial angular velocity over [begin, end]. Each segment stores, per
/// axis, coefficients c0 + c1 s + c2 s^2 + ... in local time s = t - t0 (seconds).
class MotionProfile {
 public:
  struct Segment {
    Timestamp t0 = 0;
    Timestamp t1 = 0;
    std::array<std::vector<double>, 3> coeffs;
  };

  MotionProfile() = default;
  explicit MotionProfile(std::vector<Segment> segments);

  static MotionProfile constant(const Eigen::Vector3d& theta, Timestamp begin, Timestamp end);
  static MotionProfile linear(const Eigen::Vector3d& theta_begin, const Eigen::Vector3d& theta_end, Timestamp begin,
                              Timestamp end);

  Timestamp begin() const { return segments_.front().t0; }
  Timestamp end() const { return segments_.back().t1; }
  const std::vector<Segment>& segments() const { return segments_; }

  /// Angular velocity (rad/s) at time t (microseconds, fractional allowed).
  Eigen::Vector3d theta(double t_us) const;
  /// Exact integral of theta over [ta, tb] in radians.
  Eigen::Vector3d integral(double ta_us, double tb_us) const;
  /// World-to-camera rotation Q(t) with dQ/dt = [theta]x Q and Q(begin) = I.
  Eigen::Matrix3d rotation(double t_us) const;

  bool covers(double t_us) const { return t_us >= static_cast<double>(begin()) && t_us <= static_cast<double>(end()); }

 private:
  std::size_t segment_index(double t_us) const;
  void build_table();

  std::vector<Segment> segments_;
  Timestamp table_step_ = 1000;
  std::vector<Eigen::Matrix3d> table_;
};

/// Hidden sensor constants. A(X,k) = alpha * int I dt + beta, J = log(a I + b).
struct SensorParams {
  double eps_pos = 0.2;
  double eps_neg = 0.2;
  double a = 1.0;
  double b = 0.0;
  double alpha = 4.0e6;
  double beta = 0.0;
  Timestamp tau = 5000;
  Timestamp eta = 20000;
  double full_scale = 65535.0;

  void validate() const;
  /// The APS-to-log offset O with grad J = grad A / (A - O).
  double offset() const;
};

/// Sensor geometry, optics and hidden constants of a simulated camera.
struct Rig {
  SensorGeometry geometry{64, 48};
  CameraIntrinsics intrinsics{400.0, 31.5, 23.5, 0.0};
  SensorParams params;
};

struct NoiseSpec {
  double ba_rate = 0.0;            // events per pixel per second
  double hole_prob = 0.0;          // probability a real event is dropped
  double jitter_sigma = 0.0;       // timestamp noise, microseconds
  double count_gain_sigma = 0.0;   // log-normal spread of the per-crossing threshold
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Events plus a per-event provenance tag (1 = signal, 0 = injected noise).
struct LabeledStream {
  EventStream stream;
  std::vector<std::uint8_t> is_signal;
};

/// Unit viewing ray of pixel (x, y) in the camera frame.
Eigen::Vector3d pixel_ray(const CameraIntrinsics& k, double x, double y);

/// J(X, t) = log(a I + b) at pixel (x, y) and time t (microseconds).
double sample_log_intensity(const Scene& scene, const MotionProfile& motion, const Rig& rig, double x, double y,
                            double t_us);

/// Radiance I = exp(log_radiance) seen by pixel (x, y) at time t.
double sample_radiance(const Scene& scene, const MotionProfile& motion, const Rig& rig, double x, double y, double t_us);

struct DvsOptions {
  Timestamp step_dt = 100;
  int threads = 0;
  /// Count-variance noise: each crossing draws its threshold as eps * LogNormal(0, sigma).
  double count_gain_sigma = 0.0;
  std::uint64_t seed = 0;
  int max_subdivisions = 10;
};

/// Noise-free level-crossing DVS over the motion domain. Per pixel the reference level
/// starts at J(X, begin) and moves by exactly one threshold per event; crossing times
/// are linearly interpolated between time steps.
EventStream ideal_dvs(const Scene& scene, const MotionProfile& motion, const Rig& rig, const DvsOptions& options = {});

struct ApsOptions {
  int subintervals = 4;  // 4-point Gauss-Legendre per subinterval
  int threads = 0;
  Timestamp start_offset = 0;  // first exposure at begin + start_offset
};

/// One exposure starting at start_t; values clipped to [0, full_scale].
ApsFrame render_aps_frame(const Scene& scene, const MotionProfile& motion, const Rig& rig, std::int64_t k,
                          Timestamp start_t, const ApsOptions& options = {});

/// Frames at begin + k * eta for every exposure that fits inside the motion domain.
ApsSequence synth_aps(const Scene& scene, const MotionProfile& motion, const Rig& rig, const ApsOptions& options = {});

/// Uniform samples of theta(t) at `rate` Hz over the motion domain.
ImuTrace synth_imu(const MotionProfile& motion, double rate);

/// Background activity over `span`, holes, and timestamp jitter; output re-sorted.
LabeledStream inject_noise(const LabeledStream& input, const NoiseSpec& spec, const Window& span);
LabeledStream inject_noise(const EventStream& input, const NoiseSpec& spec, const Window& span);

/// Label every event as signal.
LabeledStream all_signal(EventStream stream);

}  // namespace epmbench::sim
