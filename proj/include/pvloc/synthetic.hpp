#pragma once
/**
 * @file synthetic.hpp
 * @brief Synthetic plant layouts, rendered grayscale frames and noisy GNSS, so
 * every pipeline stage can be tested against ground truth.
 */

#include <optional>
#include <string>
#include <vector>

#include "pvloc/geometry.hpp"
#include "pvloc/image.hpp"
#include "pvloc/plant_model.hpp"

namespace pvloc {

/// Parameters of a regular row-of-benches layout.
struct LayoutSpec {
    int benches = 1;
    int rows = 2;
    int columns = 10;
    double module_width = 1.0;   // [m] along the row
    double module_height = 2.0;  // [m] up the module plane
    double pitch = 1.02;         // center-to-center along the row [m]
    double gap = 2.5;            // center-to-center across a bench gap [m]
    double row_pitch = 0.0;      // 0 -> module_height + 0.02
    double tilt_deg = 25.0;      // plane tilt from vertical, about the row axis
    double base_height = 0.8;    // center height of the bottom row [m]
};

/// Builds the plant model for a layout spec; anchors are emitted at bench ends
/// and bench gaps for every row. Throws on non-positive dimensions.
PlantModel generate_layout(const LayoutSpec& spec);

/// Sun-glare overlay: a bright ellipse in image coordinates.
struct GlareEllipse {
    double cx = 0.0, cy = 0.0;
    double rx = 0.0, ry = 0.0;
    double level = 255.0;
};

struct RenderOptions {
    double cell_level = 30.0;    // PV cell brightness
    double frame_level = 220.0;  // module frame brightness
    double ground_level = 128.0;
    double frame_border_px = 2.0;        // frame thickness [px at reference distance]
    double reference_distance_m = 12.0;  // distance the border thickness refers to
    double noise_sigma = 0.0;            // gaussian pixel noise
    int motion_blur_px = 0;              // horizontal blur kernel length
    std::optional<GlareEllipse> glare;
    std::uint64_t noise_seed = 1;
};

/// Flat-shaded render of the plant: dark cells, bright frames, mid-gray ground,
/// painter's-algorithm depth order. Noise/blur applied last.
ImageU8 render_frame(const PlantModel& model, const Pose& pose, const CameraIntrinsics& k,
                     const RenderOptions& opts);

/// Binary mask of all module areas (nonzero = module), same projection as
/// render_frame; stands in for an external presegmentation input.
ImageU8 render_module_mask(const PlantModel& model, const Pose& pose, const CameraIntrinsics& k);

struct GnssSample {
    double t = 0.0;
    Vec3 pos = Vec3::Zero();
    Vec3 vel = Vec3::Zero();
};

struct TruthSample {
    double t = 0.0;
    Pose pose;
};

struct GnssNoise {
    Vec3 offset = Vec3::Zero();   // constant shift [m]
    Vec3 drift = Vec3::Zero();    // linear drift rate [m/s]
    double jitter_sigma = 0.0;    // white noise [m]
    double rate_hz = 10.0;
    std::uint64_t seed = 1;
};

/// A recorded or simulated flight: frames on disk plus GNSS and (synthetic
/// only) ground-truth poses.
struct FlightLog {
    CameraIntrinsics intrinsics;
    std::vector<double> frame_times;
    std::vector<std::string> frame_files;  // relative to the log directory
    std::vector<GnssSample> gnss;
    std::vector<TruthSample> truth;
    GnssNoise applied_noise;
    std::string directory;

    ImageU8 load_frame(size_t index) const;
    /// Truth pose at a frame timestamp (exact sample match required).
    const Pose* truth_at(double t) const;
};

struct TrajectorySpec {
    std::vector<Vec3> waypoints;
    std::vector<Vec3> look_at;  // same length as waypoints
    double speed = 0.8;         // [m/s]
};

/// Straight-line camera path along the full bench row at a fixed standoff from
/// the module planes, facing them frontally. margin extends past the row ends.
TrajectorySpec inspection_trajectory(const PlantModel& model, double standoff, double speed,
                                     double margin = 2.0);

struct SimulateSpec {
    TrajectorySpec trajectory;
    double fps = 3.0;
    GnssNoise gnss;
    RenderOptions render;
    bool write_masks = false;
};

/// Renders a full flight into `out_dir` (frame_%06d.pgm + log.json) and returns
/// the in-memory log. Throws if the trajectory intersects module geometry.
FlightLog simulate_flight(const PlantModel& model, const CameraIntrinsics& k,
                          const SimulateSpec& spec, const std::string& out_dir);

/// Truth pose on the trajectory at time t (piecewise-linear position, look-at
/// orientation); exposed for the interpolation-residual checks.
Pose trajectory_pose(const TrajectorySpec& traj, double t);
double trajectory_duration(const TrajectorySpec& traj);

FlightLog load_flight_log(const std::string& dir);
void save_flight_log(const FlightLog& log, const std::string& dir);

}  // namespace pvloc
