#include "epmbench/epm.hpp"

#include <algorithm>
#include <cmath>

namespace epmbench::epm {

void DvsParams::validate() const {
  if (!(eps_pos > 0.0) || !(eps_neg > 0.0) || !std::isfinite(eps_pos) || !std::isfinite(eps_neg)) {
    throw Error(ErrorCode::InvalidArgument, "DVS thresholds must be positive and finite");
  }
  if (!std::isfinite(offset)) throw Error(ErrorCode::InvalidArgument, "offset must be finite");
}

Eigen::Vector2d pixel_velocity(const CameraIntrinsics& k, const Eigen::Vector3d& theta, double x, double y) {
  // K^{-1} (x, y, 1)
  double yn = (y - k.cy) / k.f;
  double xn = (x - k.cx - k.kappa * yn) / k.f;
  // [theta]_x (xn, yn, 1)
  double rx = -theta.z() * yn + theta.y();
  double ry = theta.z() * xn - theta.x();
  double rz = -theta.y() * xn + theta.x() * yn;
  return {k.f * rx + k.kappa * ry + k.cx * rz, k.f * ry + k.cy * rz};
}

FlowField rotational_flow(const CameraIntrinsics& intrinsics, const Eigen::Vector3d& theta,
                          const SensorGeometry& geometry) {
  FlowField flow{Grid<double>(geometry, 0.0), Grid<double>(geometry, 0.0)};
  for (int y = 0; y < geometry.height; ++y) {
    for (int x = 0; x < geometry.width; ++x) {
      Eigen::Vector2d v = pixel_velocity(intrinsics, theta, x, y);
      flow.vx(x, y) = v.x();
      flow.vy(x, y) = v.y();
    }
  }
  return flow;
}

GradientField spatial_gradient(const ApsFrame& frame) {
  const auto& a = frame.values;
  const int w = a.width();
  const int h = a.height();
  GradientField g{Grid<double>(w, h, 0.0), Grid<double>(w, h, 0.0), ValidityMask(w, h, 0)};
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      g.ax(x, y) = 0.5 * (a(x + 1, y) - a(x - 1, y));
      g.ay(x, y) = 0.5 * (a(x, y + 1) - a(x, y - 1));
      g.valid(x, y) = 1;
    }
  }
  return g;
}

namespace {

ValidityMask unsaturated(const Grid<double>& a, const EpmOptions& o) {
  const double margin = o.saturation_margin * (o.full_scale - o.digital_min);
  const double lo = o.digital_min + margin;
  const double hi = o.full_scale - margin;
  ValidityMask m(a.width(), a.height(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) m[i] = (a[i] > lo && a[i] < hi) ? 1 : 0;
  return m;
}

}  // namespace

EpmBasis prepare_basis(const ApsFrame& frame, const FlowField& flow, const EpmOptions& options) {
  const auto& a = frame.values;
  if (flow.vx.geometry() != a.geometry() || flow.vy.geometry() != a.geometry()) {
    throw Error(ErrorCode::GeometryMismatch, "flow field does not match APS frame");
  }
  if (frame.tau <= 0) throw Error(ErrorCode::InvalidArgument, "APS exposure must be positive");
  const double tau_s = to_seconds(frame.tau);
  GradientField grad = spatial_gradient(frame);
  ValidityMask ok = unsaturated(a, options);

  EpmBasis b{frame.exposure(), a, Grid<double>(a.geometry(), 0.0), ValidityMask(a.geometry(), 0), 0.0};
  double max_a = 0.0;
  for (double v : a.data()) max_a = std::max(max_a, v);
  b.floor = options.offset_floor * max_a;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (!grad.valid(x, y)) continue;
      if (!ok(x, y) || !ok(x - 1, y) || !ok(x + 1, y) || !ok(x, y - 1) || !ok(x, y + 1)) continue;
      double vx = flow.vx(x, y);
      double vy = flow.vy(x, y);
      b.motion_term(x, y) = tau_s * (grad.ax(x, y) * std::abs(vx) * vx + grad.ay(x, y) * std::abs(vy) * vy);
      b.static_valid(x, y) = 1;
    }
  }
  return b;
}

Eigen::Vector3d mean_angular_velocity(const ImuTrace& imu, const Window& window) {
  auto lo = std::lower_bound(imu.samples.begin(), imu.samples.end(), window.start,
                             [](const ImuSample& s, Timestamp t) { return s.t < t; });
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  std::size_t n = 0;
  for (auto it = lo; it != imu.samples.end() && it->t < window.end(); ++it, ++n) acc += it->theta;
  if (n == 0) {
    throw Error(ErrorCode::EmptyInput,
                "no IMU samples in window [" + std::to_string(window.start) + ", " + std::to_string(window.end()) + ")");
  }
  return acc / static_cast<double>(n);
}

EpmBasis prepare_basis(const ApsFrame& frame, const ImuTrace& imu, const CameraIntrinsics& intrinsics,
                       const EpmOptions& options) {
  intrinsics.validate();
  Eigen::Vector3d theta = mean_angular_velocity(imu, frame.exposure());
  return prepare_basis(frame, rotational_flow(intrinsics, theta, frame.values.geometry()), options);
}

TemporalDerivative derivative_from_basis(const EpmBasis& basis, double offset) {
  TemporalDerivative d{Grid<double>(basis.aps.geometry(), 0.0), ValidityMask(basis.aps.geometry(), 0)};
  for (std::size_t i = 0; i < basis.aps.size(); ++i) {
    if (!basis_valid(basis, i, offset)) continue;
    d.jt[i] = basis_jt(basis, i, offset);
    d.valid[i] = 1;
  }
  return d;
}

TemporalDerivative log_temporal_derivative(const ApsFrame& frame, const FlowField& flow, const DvsParams& params,
                                           const EpmOptions& options) {
  return derivative_from_basis(prepare_basis(frame, flow, options), params.offset);
}

double event_probability(double jt, double tau_seconds, const DvsParams& params) {
  if (jt == 0.0) return 0.0;
  double eps = jt > 0.0 ? params.eps_pos : params.eps_neg;
  return std::min(tau_seconds * std::abs(jt) / eps, 1.0);
}

EpmFrame epm_from_basis(const EpmBasis& basis, const DvsParams& params) {
  params.validate();
  const double tau_s = to_seconds(basis.window.length);
  EpmFrame out{basis.window, Grid<double>(basis.aps.geometry(), 0.0), ValidityMask(basis.aps.geometry(), 0)};
  for (std::size_t i = 0; i < basis.aps.size(); ++i) {
    if (!basis_valid(basis, i, params.offset)) continue;
    out.values[i] = event_probability(basis_jt(basis, i, params.offset), tau_s, params);
    out.valid[i] = 1;
  }
  return out;
}

EpmFrame epm_frame(const ApsFrame& frame, const ImuTrace& imu, const CameraIntrinsics& intrinsics,
                   const DvsParams& params, const EpmOptions& options) {
  params.validate();
  return epm_from_basis(prepare_basis(frame, imu, intrinsics, options), params);
}

}  // namespace epmbench::epm
