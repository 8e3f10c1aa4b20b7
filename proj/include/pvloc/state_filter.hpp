#pragma once
/**
 * @file state_filter.hpp
 * @brief 9-state constant-velocity filter fusing PnP poses with GNSS-derived
 * velocities through a diagonal, reprojection-gated adaptive gain.
 *
 * This is deliberately a fixed-gain-structure filter (no covariance
 * propagation): the gain diagonal carries w_pnp for position/orientation and
 * w_vel for velocities.
 */

#include <optional>
#include <vector>

#include "pvloc/geometry.hpp"

namespace pvloc {

/// X = [x, y, z, v_x, v_y, v_z, o_x, o_y, o_z]; orientation is yaw-pitch-roll
/// of the camera-to-world rotation, wrapped to (-pi, pi].
struct FilterState {
    Vec3 position = Vec3::Zero();     // [m]
    Vec3 velocity = Vec3::Zero();     // [m/s]
    Vec3 orientation = Vec3::Zero();  // [rad]
    double timestamp = 0.0;           // [s]

    Eigen::Matrix<double, 9, 1> vector() const;
};

/// Measurement with the same layout as the state. Position/orientation come
/// from PnP, velocity from GNSS differencing. A measurement without a valid
/// PnP estimate carries has_pose = false.
struct Measurement {
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    Vec3 orientation = Vec3::Zero();
    double timestamp = 0.0;
    bool has_pose = false;
    bool has_velocity = false;
    double reproj_error = 0.0;  // epsilon_r [px]
    double deviation = 0.0;     // epsilon_d [m], from the prior state estimate
};

struct GateConfig {
    double sigma = 0.16;  // gain sensitivity factor
    double th_r = 1.0;    // reprojection threshold [px]
    double th_d = 10.0;   // distance threshold [m]
    double w_vel = 1.0;   // fixed velocity confidence
    bool per_axis_gating = false;  // gate epsilon_d per axis instead of by norm

    bool valid() const { return sigma > 0 && th_r > 0 && th_d > 0 && w_vel > 0; }
};

/// Constant-velocity prediction over dt; optional control input (acceleration)
/// is applied through B(dt) when provided. Throws on dt <= 0.
FilterState predict(const FilterState& state, double dt,
                    const std::optional<Vec3>& control_accel = std::nullopt);

/// Adaptive PnP confidence:
///   0                              if eps_r > th_r or eps_d > th_d
///   min((th_r / eps_r) * sigma, 2*sigma)  otherwise (eps_r = 0 clamps to 2*sigma).
double pnp_weight(double eps_r, double eps_d, const GateConfig& gate);

/// Update X <- X^ + K (Z - X^) with identity measurement matrix and a diagonal
/// gain: w_pnp on position/orientation, w_vel on velocity. Orientation
/// innovations are wrapped. Gated-out poses leave position/orientation at the
/// prediction.
FilterState update(const FilterState& predicted, const Measurement& z, const GateConfig& gate);

/// th_r = 2 * median(eps_r samples); throws on an empty set.
double compute_th_r(std::vector<double> reproj_samples);

/// Central-difference velocities (one-sided at the ends). Throws on fewer than
/// two samples or duplicate timestamps.
std::vector<Vec3> derive_velocity(const std::vector<Vec3>& positions,
                                  const std::vector<double>& timestamps);

}  // namespace pvloc
