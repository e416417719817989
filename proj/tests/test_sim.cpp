#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include <Eigen/Geometry>

#include "epmbench/sim.hpp"

using namespace epmbench;
using namespace epmbench::sim;

namespace {

Rig small_rig() {
  Rig rig;
  rig.geometry = {16, 12};
  rig.intrinsics = {120.0, 7.5, 5.5, 0.0};
  rig.params.alpha = 1.2e6;
  return rig;
}

Scene sinusoid() {
  Scene s;
  s.kind = SceneKind::Sinusoid;
  s.amplitude = 1.0;
  s.period = 0.2;
  return s;
}

}  // namespace

TEST(MotionProfile, ConstantIntegralAndRotation) {
  Eigen::Vector3d w(0.1, -0.4, 0.25);
  auto m = MotionProfile::constant(w, 1000, 501000);
  EXPECT_TRUE(m.integral(1000, 201000).isApprox(w * 0.2, 1e-12));
  EXPECT_TRUE(m.rotation(1000).isApprox(Eigen::Matrix3d::Identity(), 1e-12));
  // dQ/dt = [w]x Q with Q(0) = I gives Q(t) = exp([w]x t).
  for (double t : {50000.0, 250000.0, 500000.0}) {
    double s = t / 1e6;
    Eigen::Matrix3d want = Eigen::AngleAxisd(w.norm() * s, w.normalized()).toRotationMatrix();
    Eigen::Matrix3d got = m.rotation(1000 + t);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-9) << "t=" << t;
    EXPECT_LT((got * got.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MotionProfile, LinearIntegralIsTrapezoid) {
  auto m = MotionProfile::linear({0, 0.2, 0}, {0, 0.6, 0}, 0, 1000000);
  EXPECT_NEAR(m.theta(500000).y(), 0.4, 1e-12);
  EXPECT_NEAR(m.integral(0, 1000000).y(), 0.4, 1e-12);
  EXPECT_NEAR(m.integral(250000, 750000).y(), 0.2, 1e-12);
}

TEST(MotionProfile, RejectsGapsAndEmpty) {
  EXPECT_THROW(MotionProfile(std::vector<MotionProfile::Segment>{}), Error);
  MotionProfile::Segment a{0, 100, {{{0.0}, {0.0}, {0.0}}}};
  MotionProfile::Segment b{200, 300, {{{0.0}, {0.0}, {0.0}}}};
  EXPECT_THROW(MotionProfile({a, b}), Error);
}

TEST(PixelRay, UnitLengthAndPrincipalPoint) {
  CameraIntrinsics k{100, 10, 20, 0.0};
  Eigen::Vector3d c = pixel_ray(k, 10, 20);
  EXPECT_TRUE(c.isApprox(Eigen::Vector3d(0, 0, 1), 1e-12));
  Eigen::Vector3d r = pixel_ray(k, 110, 20);
  EXPECT_NEAR(r.norm(), 1.0, 1e-12);
  EXPECT_NEAR(r.x() / r.z(), 1.0, 1e-12);
}

TEST(Scene, SinusoidStaysWithinAmplitude) {
  Scene s = sinusoid();
  s.base = 0.5;
  for (int i = 0; i < 200; ++i) {
    double u = -1.0 + 0.01 * i;
    Eigen::Vector3d d(std::sin(u), 0.1, std::cos(u));
    double v = s.log_radiance(d.normalized());
    EXPECT_LE(v, 1.5 + 1e-12);
    EXPECT_GE(v, -0.5 - 1e-12);
  }
  EXPECT_THROW(scene_kind_from_string("stripes"), Error);
  for (auto k : {SceneKind::Checkerboard, SceneKind::Sinusoid, SceneKind::LinearRamp, SceneKind::GaussianBlobs}) {
    EXPECT_EQ(scene_kind_from_string(to_string(k)), k);
  }
}

TEST(IdealDvs, NoMotionNoEvents) {
  Rig rig = small_rig();
  auto m = MotionProfile::constant({0, 0, 0}, 0, 100000);
  EXPECT_TRUE(ideal_dvs(sinusoid(), m, rig).empty());
}

TEST(IdealDvs, NetPolarityTracksLogIntensityChange) {
  Rig rig = small_rig();
  auto m = MotionProfile::constant({0.1, 0.5, 0}, 0, 300000);
  Scene s = sinusoid();
  EventStream ev = ideal_dvs(s, m, rig);
  ASSERT_FALSE(ev.empty());
  std::map<std::pair<int, int>, int> net;
  for (const Event& e : ev) net[{e.x, e.y}] += e.p;
  const double eps = rig.params.eps_pos;
  for (int y = 0; y < rig.geometry.height; ++y) {
    for (int x = 0; x < rig.geometry.width; ++x) {
      double dj = sample_log_intensity(s, m, rig, x, y, 300000) - sample_log_intensity(s, m, rig, x, y, 0);
      int n = net[{x, y}];
      // The reference level trails J by less than one threshold.
      EXPECT_LT(std::abs(dj - n * eps), eps + 1e-9) << x << "," << y;
    }
  }
}

TEST(IdealDvs, DeterministicAcrossThreadCounts) {
  Rig rig = small_rig();
  auto m = MotionProfile::linear({0, 0.3, 0}, {0.2, 0.6, 0}, 0, 200000);
  DvsOptions a;
  a.threads = 1;
  a.seed = 4;
  a.count_gain_sigma = 0.05;
  DvsOptions b = a;
  b.threads = 4;
  EventStream ea = ideal_dvs(sinusoid(), m, rig, a);
  EXPECT_EQ(ea, ideal_dvs(sinusoid(), m, rig, b));
  DvsOptions c = a;
  c.seed = 5;
  EXPECT_NE(ea, ideal_dvs(sinusoid(), m, rig, c));
}

TEST(IdealDvs, CoarseStepIsReported) {
  Rig rig = small_rig();
  Scene s = sinusoid();
  s.amplitude = 50.0;
  DvsOptions o;
  o.step_dt = 50000;
  o.max_subdivisions = 1;
  try {
    ideal_dvs(s, MotionProfile::constant({0, 2.0, 0}, 0, 200000), rig, o);
    FAIL() << "expected step_too_coarse";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StepTooCoarse);
  }
}

TEST(Aps, ConstantRadianceGivesClosedForm) {
  Rig rig = small_rig();
  rig.params.beta = 250.0;
  Scene s = sinusoid();
  s.amplitude = 0.0;
  s.base = std::log(0.01);
  auto m = MotionProfile::constant({0, 0.5, 0}, 0, 100000);
  ApsFrame f = render_aps_frame(s, m, rig, 3, 20000);
  double want = rig.params.alpha * to_seconds(rig.params.tau) * 0.01 + 250.0;
  for (double v : f.values.data()) EXPECT_NEAR(v, want, 1e-9 * want);
  EXPECT_EQ(f.k, 3);
  EXPECT_EQ(f.start_t, 20000);
  EXPECT_THROW(render_aps_frame(s, m, rig, 0, 99000), Error);
}

TEST(Aps, ClipsToFullScale) {
  Rig rig = small_rig();
  Scene s = sinusoid();
  s.amplitude = 0.0;
  s.base = 5.0;
  auto m = MotionProfile::constant({0, 0.5, 0}, 0, 100000);
  ApsFrame f = render_aps_frame(s, m, rig, 0, 0);
  for (double v : f.values.data()) EXPECT_EQ(v, rig.params.full_scale);
}

TEST(Aps, SequenceSpacingAndCount) {
  Rig rig = small_rig();
  auto m = MotionProfile::constant({0, 0.5, 0}, 0, 200000);
  ApsOptions o;
  o.start_offset = 30000;
  ApsSequence seq = synth_aps(sinusoid(), m, rig, o);
  // Exposures start at 30, 50, ..., 190 ms and must end by 200 ms.
  ASSERT_EQ(seq.frames.size(), 9u);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    EXPECT_EQ(seq.frames[i].start_t, 30000 + static_cast<Timestamp>(i) * rig.params.eta);
  }
  EXPECT_NO_THROW(seq.validate());
}

TEST(Imu, SamplesMotionAtRate) {
  auto m = MotionProfile::linear({0, 0.2, 0}, {0, 0.6, 0}, 0, 100000);
  ImuTrace imu = synth_imu(m, 1000);
  ASSERT_EQ(imu.samples.size(), 100u);
  EXPECT_EQ(imu.samples[10].t, 10000);
  EXPECT_NEAR(imu.samples[50].theta.y(), 0.4, 1e-12);
  EXPECT_THROW(synth_imu(m, 0.0), Error);
}

TEST(SensorParams, OffsetFormula) {
  SensorParams p;
  p.alpha = 2e6;
  p.beta = 100;
  p.a = 2.0;
  p.b = 0.5;
  p.tau = 4000;
  EXPECT_NEAR(p.offset(), 100 - 2e6 * 0.004 * 0.5 / 2.0, 1e-9);
}

TEST(InjectNoise, BackgroundRateAndProvenance) {
  EventStream clean({32, 32}, {{10, 1, 1, 1}, {20, 2, 2, -1}});
  NoiseSpec n;
  n.ba_rate = 50.0;
  n.rng_seed = 3;
  LabeledStream out = inject_noise(clean, n, {0, 1000000});
  ASSERT_EQ(out.is_signal.size(), out.stream.size());
  std::size_t signal = 0;
  for (auto t : out.is_signal) signal += t;
  EXPECT_EQ(signal, 2u);
  double expected = 50.0 * 32 * 32;
  double got = static_cast<double>(out.stream.size() - 2);
  EXPECT_LT(std::abs(got - expected), 5 * std::sqrt(expected));
  EXPECT_EQ(inject_noise(clean, n, {0, 1000000}).stream, out.stream);
  for (const Event& e : out.stream) {
    EXPECT_GE(e.t, 0);
    EXPECT_LT(e.t, 1000000);
  }
}

TEST(InjectNoise, HolesOnlyRemoveSignal) {
  std::vector<Event> ev;
  for (int i = 0; i < 1000; ++i) ev.push_back({i, static_cast<std::uint16_t>(i % 8), 0, 1});
  EventStream clean({8, 1}, ev);
  NoiseSpec n;
  n.hole_prob = 1.0;
  EXPECT_TRUE(inject_noise(clean, n, {0, 1000}).stream.empty());
  n.hole_prob = 0.3;
  std::size_t kept = inject_noise(clean, n, {0, 1000}).stream.size();
  EXPECT_NEAR(static_cast<double>(kept), 700.0, 5 * std::sqrt(1000 * 0.3 * 0.7));
  n.hole_prob = 1.5;
  EXPECT_THROW(inject_noise(clean, n, {0, 1000}), Error);
}
