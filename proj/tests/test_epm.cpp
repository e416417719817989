#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "epmbench/epm.hpp"
#include "epmbench/rng.hpp"
#include "epmbench/sim.hpp"

using namespace epmbench;
using namespace epmbench::epm;

namespace {

Eigen::Vector2d project(const CameraIntrinsics& k, const Eigen::Vector3d& p) {
  Eigen::Vector3d h = k.matrix() * p;
  return {h.x() / h.z(), h.y() / h.z()};
}

ApsFrame frame_from(const Grid<double>& g, Timestamp tau = 5000) { return ApsFrame{0, 0, tau, g}; }

}  // namespace

TEST(PixelVelocity, IsTheHomogeneousFlowFormula) {
  auto rng = make_rng(21, 0);
  for (int trial = 0; trial < 50; ++trial) {
    CameraIntrinsics k{200 + 300 * uniform01(rng), 30 * uniform01(rng), 20 * uniform01(rng),
                       trial % 2 ? 0.0 : 5 * uniform01(rng)};
    Eigen::Vector3d theta(uniform01(rng) - 0.5, uniform01(rng) - 0.5, uniform01(rng) - 0.5);
    double x = 64 * uniform01(rng), y = 48 * uniform01(rng);
    Eigen::Vector3d p = k.matrix().inverse() * Eigen::Vector3d(x, y, 1.0);
    Eigen::Matrix3d cross;
    cross << 0, -theta.z(), theta.y(), theta.z(), 0, -theta.x(), -theta.y(), theta.x(), 0;
    Eigen::Vector3d r = cross * p;
    Eigen::Vector2d want = (k.matrix() * r).head<2>();
    Eigen::Vector2d v = pixel_velocity(k, theta, x, y);
    EXPECT_LT((want - v).norm(), 1e-9 * (1.0 + v.norm())) << "trial " << trial;

    // The projected velocity of a fixed world direction (dP/dt = theta x P) differs
    // from the formula by the perspective-division term (x, y) * dP_z/dt.
    const double h = 1e-6;
    Eigen::Vector2d fd = (project(k, p + h * r) - project(k, p - h * r)) / (2 * h);
    EXPECT_LT((fd - (v - Eigen::Vector2d(x, y) * r.z())).norm(), 1e-5 * (1.0 + v.norm()));

    Eigen::Vector3d other(uniform01(rng), -uniform01(rng), 0.3);
    Eigen::Vector2d sum = pixel_velocity(k, theta + other, x, y);
    EXPECT_LT((sum - v - pixel_velocity(k, other, x, y)).norm(), 1e-9 * (1.0 + sum.norm()));
  }
}

TEST(SpatialGradient, ExactOnLinearImageAndMasksBorder) {
  Grid<double> a(6, 5);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 6; ++x) a(x, y) = 100 + 3 * x - 7 * y;
  }
  GradientField g = spatial_gradient(frame_from(a));
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 6; ++x) {
      bool interior = x > 0 && y > 0 && x < 5 && y < 4;
      EXPECT_EQ(g.valid(x, y), interior ? 1 : 0);
      if (interior) {
        EXPECT_DOUBLE_EQ(g.ax(x, y), 3.0);
        EXPECT_DOUBLE_EQ(g.ay(x, y), -7.0);
      }
    }
  }
}

TEST(TemporalDerivative, HandComputedPixel) {
  Grid<double> a(5, 5);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) a(x, y) = 1000 + 20 * x + 10 * y;
  }
  FlowField flow{Grid<double>(5, 5, 30.0), Grid<double>(5, 5, -40.0)};
  DvsParams p{0.2, 0.25, 100.0};
  TemporalDerivative d = log_temporal_derivative(frame_from(a, 4000), flow, p);
  double want = -(0.004 / (1060.0 - 100.0)) * (20.0 * 30.0 * 30.0 + 10.0 * 40.0 * -40.0);
  EXPECT_TRUE(d.valid(2, 2));
  EXPECT_NEAR(d.jt(2, 2), want, 1e-12 * std::abs(want));
  EXPECT_FALSE(d.valid(0, 2));
}

TEST(EventProbability, ClampsAndPicksThresholdBySign) {
  DvsParams p{0.2, 0.4, 0.0};
  EXPECT_DOUBLE_EQ(event_probability(0.0, 0.005, p), 0.0);
  EXPECT_DOUBLE_EQ(event_probability(10.0, 0.005, p), 0.25);
  EXPECT_DOUBLE_EQ(event_probability(-10.0, 0.005, p), 0.125);
  EXPECT_DOUBLE_EQ(event_probability(1e6, 0.005, p), 1.0);
  EXPECT_DOUBLE_EQ(event_probability(-1e6, 0.005, p), 1.0);
}

TEST(Validity, SaturationAndOffsetFloor) {
  Grid<double> a(7, 7, 30000.0);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 7; ++x) a(x, y) += 100 * x;
  }
  a(3, 3) = 65535.0;  // saturated: its 4-neighbors lose their gradient too
  FlowField flow{Grid<double>(7, 7, 10.0), Grid<double>(7, 7, 0.0)};
  TemporalDerivative d = log_temporal_derivative(frame_from(a), flow, {0.2, 0.2, 0.0});
  EXPECT_FALSE(d.valid(3, 3));
  EXPECT_FALSE(d.valid(2, 3));
  EXPECT_FALSE(d.valid(4, 3));
  EXPECT_FALSE(d.valid(3, 2));
  EXPECT_TRUE(d.valid(2, 2));
  // Offset just under A at (2,2) pushes A - O below the floor there.
  double o = a(2, 2) - 1.0;
  TemporalDerivative d2 = log_temporal_derivative(frame_from(a), flow, {0.2, 0.2, o});
  EXPECT_FALSE(d2.valid(2, 2));
  EXPECT_TRUE(d2.valid(5, 5));
}

TEST(MeanAngularVelocity, AveragesSamplesInsideWindow) {
  ImuTrace imu;
  for (int i = 0; i < 10; ++i) imu.samples.push_back({i * 1000, Eigen::Vector3d(i, 0, -i)});
  Eigen::Vector3d m = mean_angular_velocity(imu, {2000, 3000});  // samples 2, 3, 4
  EXPECT_TRUE(m.isApprox(Eigen::Vector3d(3, 0, -3)));
  EXPECT_THROW(mean_angular_velocity(imu, {20000, 1000}), Error);
}

TEST(EpmFrame, BasisPathMatchesDirectPathAndIsAProbability) {
  sim::Rig rig;
  rig.geometry = {24, 18};
  rig.intrinsics = {150, 11.5, 8.5, 0};
  rig.params.alpha = 1.2e6;
  sim::Scene s;
  s.amplitude = 2.0;
  s.period = 0.2;
  auto m = sim::MotionProfile::constant({0.2, 0.5, 0}, 0, 100000);
  ApsFrame f = sim::render_aps_frame(s, m, rig, 0, 20000);
  ImuTrace imu = sim::synth_imu(m, 1000);
  DvsParams p{0.2, 0.3, -500.0};
  EpmFrame direct = epm_frame(f, imu, rig.intrinsics, p);
  EpmFrame basis = epm_from_basis(prepare_basis(f, imu, rig.intrinsics), p);
  ASSERT_GT(direct.valid_count(), 100u);
  EXPECT_EQ(direct.valid, basis.valid);
  TemporalDerivative jt = derivative_from_basis(prepare_basis(f, imu, rig.intrinsics), p.offset);
  for (std::size_t i = 0; i < direct.values.size(); ++i) {
    if (!direct.valid[i]) continue;
    EXPECT_DOUBLE_EQ(direct.values[i], basis.values[i]);
    EXPECT_GE(direct.values[i], 0.0);
    EXPECT_LE(direct.values[i], 1.0);
    EXPECT_DOUBLE_EQ(direct.values[i], event_probability(jt.jt[i], 0.005, p));
  }
  EXPECT_EQ(direct.window, f.exposure());
}

TEST(EpmFrame, RejectsBadInputs) {
  Grid<double> a(4, 4, 1000.0);
  FlowField bad{Grid<double>(3, 4), Grid<double>(3, 4)};
  EXPECT_THROW(log_temporal_derivative(frame_from(a), bad, {}), Error);
  FlowField ok{Grid<double>(4, 4), Grid<double>(4, 4)};
  EXPECT_THROW(log_temporal_derivative(frame_from(a, 0), ok, {}), Error);
  EXPECT_THROW(epm_from_basis(prepare_basis(frame_from(a), ok), DvsParams{0.0, 0.2, 0.0}), Error);
}
