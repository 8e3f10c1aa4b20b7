#pragma once
/**
 * @file pipeline.hpp
 * @brief End-to-end flight replay: detection -> structure -> anchors/tracking
 * -> association -> PnP -> filter, with reports, statistics and plot data.
 */

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pvloc/anchors_tracking.hpp"
#include "pvloc/bbox_structure.hpp"
#include "pvloc/edge_detector.hpp"
#include "pvloc/plant_model.hpp"
#include "pvloc/pose_estimator.hpp"
#include "pvloc/state_filter.hpp"
#include "pvloc/synthetic.hpp"

namespace pvloc {

/// Bad or contradictory configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Anchor never confirmed within the allowed window (CLI exit code 3).
struct InitializationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DetectorChoice { edge, bbox_file };

struct RunConfig {
    std::string flight_dir;
    std::string model_path;
    DetectorChoice detector = DetectorChoice::edge;
    std::string detections_path;  // bbox detector input
    std::string mask_pattern;     // optional presegmentation masks (printf pattern)
    double fps_limit = 0.0;       // 0 = process every frame
    std::string anchor_hint;
    std::uint64_t seed = 1;
    std::string output_dir;

    EdgeDetectorParams edge;
    BoxFilterParams box_filter;
    RowFitParams row_fit;
    TrackerParams tracker;
    GapDetectParams gaps;
    FlowParams flow;
    double end_margin_px = 10.0;
    GateConfig gate;              // gate.th_r <= 0 requests calibration
    int th_r_calibration_samples = 30;
    int anchor_confirm_frames = 3;
    int init_max_frames = 60;
    int flight_direction_sign = 1;
};

RunConfig load_run_config(const std::string& path);

struct FrameRecord {
    long frame_index = 0;   // index into the flight log
    double timestamp = 0.0;
    int detections = 0;
    int correspondences = 0;
    int gap_observations = 0;
    int end_observations = 0;
    bool pnp_valid = false;
    Vec3 pnp_position = Vec3::Zero();
    Vec3 pnp_ypr = Vec3::Zero();
    double eps_r = 0.0;
    double eps_d = 0.0;
    double w_pnp = 0.0;
    bool gated = false;      // pose measurement rejected by the gate
    bool filter_ready = false;
    Vec3 filt_position = Vec3::Zero();
    Vec3 filt_ypr = Vec3::Zero();
    Vec3 gnss = Vec3::Zero();
    bool has_truth = false;
    Vec3 truth_position = Vec3::Zero();
    Vec3 truth_ypr = Vec3::Zero();
    double err_filt_truth = 0.0;
    double err_pnp_truth = 0.0;
    double err_filt_gnss = 0.0;
    double ang_filt_truth = 0.0;  // [rad]
    double t_detect_ms = 0.0;
    double t_track_ms = 0.0;
    double t_pnp_ms = 0.0;
    double t_filter_ms = 0.0;
};

struct RunReport {
    std::vector<FrameRecord> frames;
    double th_r_used = 0.0;
    bool initialized = false;
    long init_frame = -1;

    // aggregates (recomputable from the rows)
    int processed_frames = 0;
    double valid_pnp_pct = 0.0;
    double under_th_r_pct = 0.0;
    double under_th_d_pct = 0.0;
    double detection_success_pct = 0.0;
    double mean_eps_d = 0.0;
    double mean_err_pnp_truth = 0.0;
    double mean_err_filt_truth = 0.0;
    double p90_err_filt_truth = 0.0;
    double mean_err_filt_gnss = 0.0;

    void recompute_aggregates();
};

RunReport run_replay(const RunConfig& config);

struct FivePointStats {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Exact order statistics with linear interpolation between ranks.
FivePointStats five_point(std::vector<double> values);

struct Summary {
    FivePointStats err_filt_truth;
    FivePointStats err_pnp_truth;
    FivePointStats orientation_err;  // angular distance [rad]
    FivePointStats eps_r;
};

/// Five-point statistics per metric over the report rows. Throws on an empty
/// report.
Summary summarize(const RunReport& report);

struct StageTimings {
    double detect_ms = 0.0;
    double track_ms = 0.0;
    double pnp_ms = 0.0;
    double filter_ms = 0.0;
    double total_ms = 0.0;
};

StageTimings time_stages(const RunReport& report);

/// Writes report.csv and aggregates.json (both deterministic for a fixed
/// config + seed) plus timings.json (wall-clock, excluded from determinism).
void write_report(const RunReport& report, const std::string& out_dir);

/// Reads report.csv + aggregates.json back and verifies the aggregates match
/// the rows (self-consistency); throws when they do not.
RunReport read_report(const std::string& out_dir);

/// Simulation spec (layout + camera + flight) loaded from JSON; used by the
/// CLI `simulate` subcommand, which also writes model.json next to the log.
struct SimulationSpec {
    LayoutSpec layout;
    CameraIntrinsics camera;
    SimulateSpec sim;
    double standoff = 12.0;
    double margin = 2.0;
    bool has_explicit_trajectory = false;
};

SimulationSpec load_simulation_spec(const std::string& path);
void run_simulation(const SimulationSpec& spec, const std::string& out_dir);

}  // namespace pvloc
