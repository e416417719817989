#pragma once

#include <Eigen/Core>

#include "epmbench/core.hpp"

namespace epmbench::epm {

/// DVS thresholds (log units) and the APS-to-log offset O in digital counts.
struct DvsParams {
  double eps_pos = 0.2;
  double eps_neg = 0.2;
  double offset = 0.0;

  void validate() const;
};

/// Validity rules for pixels where the model can be evaluated.
struct EpmOptions {
  double digital_min = 0.0;
  double full_scale = 65535.0;
  double saturation_margin = 0.01;  // fraction of the digital range treated as saturated at each end
  double offset_floor = 1e-3;       // A - O must be >= offset_floor * max(A)
};

/// Instantaneous pixel velocity (px/s) at every pixel.
struct FlowField {
  Grid<double> vx;
  Grid<double> vy;
};

/// Central-difference APS gradient in counts/pixel; the 1-pixel border is invalid.
struct GradientField {
  Grid<double> ax;
  Grid<double> ay;
  ValidityMask valid;
};

/// Log-intensity temporal derivative in 1/s.
struct TemporalDerivative {
  Grid<double> jt;
  ValidityMask valid;
};

/// V = K_{2x3} [theta]_x K^{-1} (x, y, 1)^T, the first-order rotational flow.
Eigen::Vector2d pixel_velocity(const CameraIntrinsics& intrinsics, const Eigen::Vector3d& theta, double x, double y);

FlowField rotational_flow(const CameraIntrinsics& intrinsics, const Eigen::Vector3d& theta,
                          const SensorGeometry& geometry);

GradientField spatial_gradient(const ApsFrame& frame);

/// J_t = -(tau / (A - O)) (A_x |v_x| v_x + A_y |v_y| v_y), tau in seconds. Pixels with a
/// masked gradient, saturated APS values or A - O below the floor are invalid.
TemporalDerivative log_temporal_derivative(const ApsFrame& frame, const FlowField& flow, const DvsParams& params,
                                           const EpmOptions& options = {});

/// Arithmetic mean of IMU samples with t in the window; throws if there are none.
Eigen::Vector3d mean_angular_velocity(const ImuTrace& imu, const Window& window);

/// min(tau |J_t| / eps, 1) with eps chosen by the sign of J_t; 0 when J_t == 0.
double event_probability(double jt, double tau_seconds, const DvsParams& params);

EpmFrame epm_frame(const ApsFrame& frame, const ImuTrace& imu, const CameraIntrinsics& intrinsics,
                   const DvsParams& params, const EpmOptions& options = {});

/// Offset-independent parts of one EPM frame. Re-evaluating under many (eps, O)
/// candidates only needs a division and a clamp per pixel.
struct EpmBasis {
  Window window;
  Grid<double> aps;
  Grid<double> motion_term;   // tau * (A_x |v_x| v_x + A_y |v_y| v_y)
  ValidityMask static_valid;  // interior and unsaturated
  double floor = 0.0;         // offset_floor * max(A)
};

EpmBasis prepare_basis(const ApsFrame& frame, const FlowField& flow, const EpmOptions& options = {});
EpmBasis prepare_basis(const ApsFrame& frame, const ImuTrace& imu, const CameraIntrinsics& intrinsics,
                       const EpmOptions& options = {});

/// True when the pixel is evaluable at this offset.
inline bool basis_valid(const EpmBasis& b, std::size_t i, double offset) {
  return b.static_valid[i] && b.aps[i] - offset >= b.floor;
}

inline double basis_jt(const EpmBasis& b, std::size_t i, double offset) {
  return -b.motion_term[i] / (b.aps[i] - offset);
}

TemporalDerivative derivative_from_basis(const EpmBasis& basis, double offset);
EpmFrame epm_from_basis(const EpmBasis& basis, const DvsParams& params);

}  // namespace epmbench::epm
