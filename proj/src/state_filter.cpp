#include "pvloc/state_filter.hpp"

#include <algorithm>
#include <stdexcept>

namespace pvloc {

Eigen::Matrix<double, 9, 1> FilterState::vector() const {
    Eigen::Matrix<double, 9, 1> x;
    x << position, velocity, orientation;
    return x;
}

FilterState predict(const FilterState& state, double dt, const std::optional<Vec3>& control_accel) {
    if (dt <= 0.0) throw std::runtime_error("predict: dt must be positive");
    FilterState out = state;
    out.position += state.velocity * dt;
    if (control_accel) {
        // B(dt) maps acceleration input onto position and velocity
        out.position += *control_accel * (0.5 * dt * dt);
        out.velocity += *control_accel * dt;
    }
    out.timestamp = state.timestamp + dt;
    return out;
}

double pnp_weight(double eps_r, double eps_d, const GateConfig& gate) {
    if (!gate.valid()) throw std::runtime_error("pnp_weight: invalid gate config");
    if (eps_r > gate.th_r || eps_d > gate.th_d) return 0.0;
    if (eps_r <= 0.0) return 2.0 * gate.sigma;  // formula's limit as eps_r -> 0
    return std::min(gate.th_r / eps_r * gate.sigma, 2.0 * gate.sigma);
}

FilterState update(const FilterState& predicted, const Measurement& z, const GateConfig& gate) {
    if (z.timestamp < predicted.timestamp - 1e-9)
        throw std::runtime_error("update: measurement older than state");
    FilterState out = predicted;
    out.timestamp = z.timestamp;

    if (z.has_pose) {
        double w = pnp_weight(z.reproj_error, z.deviation, gate);
        if (gate.per_axis_gating) {
            // any axis exceeding th_d rejects the pose measurement
            const Vec3 d = z.position - predicted.position;
            if (d.cwiseAbs().maxCoeff() > gate.th_d) w = 0.0;
        }
        if (w > 0.0) {
            out.position += w * (z.position - predicted.position);
            for (int i = 0; i < 3; ++i) {
                const double innov = wrap_angle(z.orientation[i] - predicted.orientation[i]);
                out.orientation[i] = wrap_angle(predicted.orientation[i] + w * innov);
            }
        }
    }
    if (z.has_velocity) {
        out.velocity += gate.w_vel * (z.velocity - predicted.velocity);
    }
    return out;
}

double compute_th_r(std::vector<double> samples) {
    if (samples.empty()) throw std::runtime_error("compute_th_r: empty sample set");
    std::sort(samples.begin(), samples.end());
    const size_t n = samples.size();
    const double med =
        (n % 2 == 1) ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
    return 2.0 * med;
}

std::vector<Vec3> derive_velocity(const std::vector<Vec3>& positions,
                                  const std::vector<double>& timestamps) {
    const size_t n = positions.size();
    if (n < 2 || timestamps.size() != n)
        throw std::runtime_error("derive_velocity: need at least two samples");
    for (size_t i = 1; i < n; ++i)
        if (timestamps[i] <= timestamps[i - 1])
            throw std::runtime_error("derive_velocity: duplicate or decreasing timestamps");

    std::vector<Vec3> vel(n);
    vel[0] = (positions[1] - positions[0]) / (timestamps[1] - timestamps[0]);
    vel[n - 1] = (positions[n - 1] - positions[n - 2]) / (timestamps[n - 1] - timestamps[n - 2]);
    for (size_t i = 1; i + 1 < n; ++i)
        vel[i] = (positions[i + 1] - positions[i - 1]) / (timestamps[i + 1] - timestamps[i - 1]);
    return vel;
}

}  // namespace pvloc
