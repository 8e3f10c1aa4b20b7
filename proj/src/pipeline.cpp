#include "pvloc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pvloc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double get_or(const json& j, const char* key, double def) {
    return j.contains(key) ? j.at(key).get<double>() : def;
}
int get_or_int(const json& j, const char* key, int def) {
    return j.contains(key) ? j.at(key).get<int>() : def;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    RunConfig c;
    c.flight_dir = j.value("flight_dir", std::string());
    c.model_path = j.value("model", std::string());
    const std::string det = j.value("detector", std::string("edge"));
    if (det == "edge")
        c.detector = DetectorChoice::edge;
    else if (det == "bbox")
        c.detector = DetectorChoice::bbox_file;
    else
        throw ConfigError("unknown detector: " + det);
    c.detections_path = j.value("detections", std::string());
    c.mask_pattern = j.value("mask_pattern", std::string());
    c.fps_limit = j.value("fps_limit", 0.0);
    c.anchor_hint = j.value("anchor_hint", std::string());
    c.seed = j.value("seed", 1ull);
    c.output_dir = j.value("output_dir", std::string("out"));

    if (c.flight_dir.empty()) throw ConfigError("flight_dir is required");
    if (c.model_path.empty()) throw ConfigError("model is required");
    if (c.detector == DetectorChoice::edge && !c.detections_path.empty())
        throw ConfigError("detector 'edge' must not carry a detections file (one source only)");
    if (c.detector == DetectorChoice::bbox_file && c.detections_path.empty())
        throw ConfigError("detector 'bbox' requires a detections file");
    if (c.fps_limit < 0) throw ConfigError("fps_limit must be positive");

    if (j.contains("edge")) {
        const json& e = j["edge"];
        c.edge.max_dimension = get_or_int(e, "max_dimension", c.edge.max_dimension);
        c.edge.target_focus = get_or(e, "target_focus", c.edge.target_focus);
        c.edge.canny_low = get_or(e, "canny_low", 0.0);
        c.edge.canny_high = get_or(e, "canny_high", 0.0);
        if (e.contains("hough")) {
            const json& h = e["hough"];
            c.edge.hough.rho_res = get_or(h, "rho_res", c.edge.hough.rho_res);
            c.edge.hough.theta_res_deg = get_or(h, "theta_res_deg", c.edge.hough.theta_res_deg);
            c.edge.hough.weight_threshold_vertical =
                get_or(h, "weight_threshold_vertical", c.edge.hough.weight_threshold_vertical);
            c.edge.hough.weight_ratio_horizontal =
                get_or(h, "weight_ratio_horizontal", c.edge.hough.weight_ratio_horizontal);
            c.edge.hough.family_band_deg = get_or(h, "family_band_deg",
                                                  c.edge.hough.family_band_deg);
        }
        c.edge.cluster_stop_fraction =
            get_or(e, "cluster_stop_fraction", c.edge.cluster_stop_fraction);
        c.edge.angle_tol_deg = get_or(e, "angle_tol_deg", c.edge.angle_tol_deg);
        if (e.contains("expected_module_px")) {
            c.edge.filter.expected_w = e["expected_module_px"][0].get<double>();
            c.edge.filter.expected_h = e["expected_module_px"][1].get<double>();
        }
        c.edge.filter.size_tol = get_or(e, "size_tol", c.edge.filter.size_tol);
        if (e.contains("aspect_band")) {
            c.edge.filter.aspect_lo = e["aspect_band"][0].get<double>();
            c.edge.filter.aspect_hi = e["aspect_band"][1].get<double>();
        }
    }
    if (j.contains("bbox")) {
        const json& b = j["bbox"];
        c.box_filter.iou_threshold = get_or(b, "iou_threshold", c.box_filter.iou_threshold);
        c.box_filter.size_divergence = get_or(b, "size_divergence", c.box_filter.size_divergence);
        c.box_filter.border_margin = get_or(b, "border_margin", c.box_filter.border_margin);
        c.row_fit.residual_fraction = get_or(b, "residual_fraction", c.row_fit.residual_fraction);
        c.row_fit.ransac_iterations =
            get_or_int(b, "ransac_iterations", c.row_fit.ransac_iterations);
        c.row_fit.parallel_tol_deg = get_or(b, "parallel_tol_deg", c.row_fit.parallel_tol_deg);
    }
    c.row_fit.seed = c.seed;
    if (j.contains("tracking")) {
        const json& t = j["tracking"];
        c.tracker.match_threshold = get_or(t, "match_threshold", c.tracker.match_threshold);
        c.tracker.max_missing = get_or_int(t, "max_missing", c.tracker.max_missing);
    }
    if (j.contains("flow")) {
        const json& fl = j["flow"];
        c.flow.window_half = get_or_int(fl, "window_half", c.flow.window_half);
        c.flow.levels = get_or_int(fl, "levels", c.flow.levels);
    }
    if (j.contains("gaps")) {
        const json& g = j["gaps"];
        c.gaps.spacing_factor = get_or(g, "spacing_factor", c.gaps.spacing_factor);
        c.gaps.hist_bins = get_or_int(g, "hist_bins", c.gaps.hist_bins);
        c.gaps.confirm_threshold = get_or(g, "confirm_threshold", c.gaps.confirm_threshold);
    }
    c.end_margin_px = j.value("end_margin_px", c.end_margin_px);
    if (j.contains("gate")) {
        const json& g = j["gate"];
        c.gate.sigma = get_or(g, "sigma", c.gate.sigma);
        c.gate.th_r = get_or(g, "th_r", 0.0);
        c.gate.th_d = get_or(g, "th_d", c.gate.th_d);
        c.gate.w_vel = get_or(g, "w_vel", c.gate.w_vel);
        c.gate.per_axis_gating = g.value("per_axis_gating", false);
    } else {
        c.gate.th_r = 0.0;  // calibrate by default
    }
    c.th_r_calibration_samples =
        get_or_int(j, "th_r_calibration_samples", c.th_r_calibration_samples);
    c.anchor_confirm_frames = get_or_int(j, "anchor_confirm_frames", c.anchor_confirm_frames);
    c.init_max_frames = get_or_int(j, "init_max_frames", c.init_max_frames);
    c.flight_direction_sign = get_or_int(j, "flight_direction_sign", 1);
    return c;
}

namespace {

Vec3 interp_position(const std::vector<GnssSample>& gnss, double t) {
    if (gnss.empty()) return Vec3::Zero();
    if (t <= gnss.front().t) return gnss.front().pos;
    if (t >= gnss.back().t) return gnss.back().pos;
    for (size_t i = 0; i + 1 < gnss.size(); ++i) {
        if (t >= gnss[i].t && t <= gnss[i + 1].t) {
            const double u = (t - gnss[i].t) / (gnss[i + 1].t - gnss[i].t);
            return gnss[i].pos + (gnss[i + 1].pos - gnss[i].pos) * u;
        }
    }
    return gnss.back().pos;
}

Vec3 interp_velocity(const std::vector<GnssSample>& gnss, double t) {
    if (gnss.empty()) return Vec3::Zero();
    if (t <= gnss.front().t) return gnss.front().vel;
    if (t >= gnss.back().t) return gnss.back().vel;
    for (size_t i = 0; i + 1 < gnss.size(); ++i) {
        if (t >= gnss[i].t && t <= gnss[i + 1].t) {
            const double u = (t - gnss[i].t) / (gnss[i + 1].t - gnss[i].t);
            return gnss[i].vel + (gnss[i + 1].vel - gnss[i].vel) * u;
        }
    }
    return gnss.back().vel;
}

/// (bench row, combined column) of a module id within the row layout.
std::pair<int, int> module_grid_position(const PlantModel& model, const RowLayout& layout,
                                         const std::string& id) {
    const int col = layout.column_of(model, id);
    if (col < 0) return {-1, -1};
    const auto& [bench_idx, bench_col] = layout.columns[col];
    const Bench& bench = model.benches[bench_idx];
    for (int r = 0; r < bench.rows(); ++r)
        if (bench.grid[r][bench_col] == id) return {r, col};
    return {-1, col};
}

/// Walk along sequence positions collapsing confirmed gap intervals, mirroring
/// the anchor-based association.
int walk_columns(int seq, int ref_seq, int ref_col,
                 const std::vector<std::pair<int, int>>& gaps) {
    int s = ref_seq, c = ref_col;
    while (s < seq) {
        bool jumped = false;
        for (const auto& [gl, gr] : gaps)
            if (gl == s && gr <= seq) {
                s = gr;
                c += 1;
                jumped = true;
                break;
            }
        if (!jumped) {
            ++s;
            ++c;
        }
    }
    while (s > seq) {
        bool jumped = false;
        for (const auto& [gl, gr] : gaps)
            if (gr == s && gl >= seq) {
                s = gl;
                c -= 1;
                jumped = true;
                break;
            }
        if (!jumped) {
            --s;
            --c;
        }
    }
    return c;
}

double ms_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace

RunReport run_replay(const RunConfig& config) {
    const PlantModel model = load_plant_model(config.model_path);
    const RowLayout layout = build_row_layout(model);
    const FlightLog log = load_flight_log(config.flight_dir);
    const CameraIntrinsics& cam = log.intrinsics;

    if (config.anchor_hint.empty()) throw ConfigError("anchor_hint is required");
    const AnchorPoint* anchor = model.find_anchor(config.anchor_hint);
    if (!anchor) throw ConfigError("anchor hint not found in model: " + config.anchor_hint);

    DetectionFrames detections;
    std::map<long, const std::vector<OrientedBBox>*> detections_by_index;
    if (config.detector == DetectorChoice::bbox_file) {
        detections = load_detections(config.detections_path);
        for (size_t i = 0; i < detections.frames.size(); ++i) {
            const long idx = i < detections.indices.size() ? detections.indices[i]
                                                           : static_cast<long>(i);
            detections_by_index[idx] = &detections.frames[i];
        }
    }

    // expected module size in pixels, derived from the model and the GNSS
    // standoff when the config does not pin it
    EdgeDetectorParams edge_params = config.edge;
    if (edge_params.filter.expected_w <= 0 || edge_params.filter.expected_h <= 0) {
        double standoff = 12.0;
        if (!log.gnss.empty()) {
            double best = 1e300;
            for (const auto& m : model.modules)
                best = std::min(best, (log.gnss.front().pos - m.center).norm());
            if (best < 1e300 && best > 1.0) standoff = best;
        }
        const double mw = model.modules.empty() ? 1.0 : model.modules.front().width;
        const double mh = model.modules.empty() ? 2.0 : model.modules.front().height;
        edge_params.filter.expected_w = cam.fx * mw / standoff;
        edge_params.filter.expected_h = cam.fy * mh / standoff;
    }

    RunReport report;
    GateConfig gate = config.gate;
    const bool calibrate_th_r = gate.th_r <= 0.0;
    std::vector<double> th_r_samples;
    if (calibrate_th_r) gate.th_r = 1e9;  // provisional until samples arrive

    std::vector<Track> tracks;
    long next_track_id = 0;
    std::map<long, std::string> track_module;
    ImageU8 prev_working;
    bool initialized = false;
    int confirm_streak = 0;
    FilterState state;
    bool filter_ready = false;

    double last_processed_t = -1e300;
    const double min_spacing = config.fps_limit > 0 ? 1.0 / config.fps_limit - 1e-6 : 0.0;
    int processed = 0;

    for (size_t fi = 0; fi < log.frame_times.size(); ++fi) {
        const double t = log.frame_times[fi];
        if (config.fps_limit > 0 && t - last_processed_t < min_spacing) continue;
        last_processed_t = t;
        ++processed;

        FrameRecord rec;
        rec.frame_index = static_cast<long>(fi);
        rec.timestamp = t;

        const ImageU8 image = log.load_frame(fi);
        double scale = 1.0;
        const ImageU8 working = resize_to_max_dim(image, config.edge.max_dimension, &scale);

        // ---- detection ----
        const auto t_detect = std::chrono::steady_clock::now();
        SemanticStructure structure;
        if (config.detector == DetectorChoice::edge) {
            ImageU8 mask;
            const ImageU8* mask_ptr = nullptr;
            if (!config.mask_pattern.empty()) {
                char buf[512];
                std::snprintf(buf, sizeof(buf), config.mask_pattern.c_str(),
                              static_cast<int>(fi));
                mask = read_pgm(buf);
                mask_ptr = &mask;
            }
            EdgeDetectionResult det = detect_modules_edge(image, cam, edge_params, mask_ptr);
            structure = std::move(det.structure);
        } else {
            auto it = detections_by_index.find(static_cast<long>(fi));
            if (it != detections_by_index.end()) {
                structure = detect_modules_bbox(*it->second, cam.width, cam.height,
                                                config.box_filter, config.row_fit,
                                                config.flight_direction_sign);
            }
        }
        rec.detections = static_cast<int>(structure.detections.size());
        rec.t_detect_ms = ms_since(t_detect);

        // ---- tracking ----
        const auto t_track = std::chrono::steady_clock::now();
        std::vector<FlowResult> track_flow(tracks.size());
        if (!prev_working.empty() && !tracks.empty()) {
            std::vector<Vec2> pts;
            for (const auto& tr : tracks)
                for (const auto& p : tr.points) pts.push_back(p * scale);
            const std::vector<FlowResult> flow =
                estimate_flow(prev_working, working, pts, config.flow);
            size_t cursor = 0;
            for (size_t ti = 0; ti < tracks.size(); ++ti) {
                std::vector<double> dx, dy;
                for (size_t pi = 0; pi < tracks[ti].points.size(); ++pi, ++cursor) {
                    if (flow[cursor].valid) {
                        dx.push_back(flow[cursor].displacement.x());
                        dy.push_back(flow[cursor].displacement.y());
                    }
                }
                if (!dx.empty()) {
                    std::sort(dx.begin(), dx.end());
                    std::sort(dy.begin(), dy.end());
                    track_flow[ti].displacement =
                        Vec2(dx[dx.size() / 2], dy[dy.size() / 2]) / scale;
                    track_flow[ti].valid = true;
                }
            }
        }
        TrackUpdate update_result =
            track_modules(tracks, track_flow, structure, config.tracker, next_track_id);
        tracks = std::move(update_result.tracks);
        const std::vector<long>& detection_track = update_result.detection_track;
        rec.t_track_ms = ms_since(t_track);

        // ---- anchors ----
        const std::vector<GapObservation> gaps = detect_bench_gaps(structure, image, config.gaps);
        const std::vector<EndObservation> ends =
            detect_bench_ends(structure, image.width, image.height, config.end_margin_px);
        rec.gap_observations = static_cast<int>(gaps.size());
        rec.end_observations = static_cast<int>(ends.size());

        std::vector<GapInterval> gap_intervals;
        std::vector<std::pair<int, int>> gap_pairs;
        for (const auto& g : gaps) {
            gap_intervals.push_back({g.row, g.seq_left, g.seq_right});
            gap_pairs.emplace_back(g.seq_left, g.seq_right);
        }
        std::sort(gap_pairs.begin(), gap_pairs.end());
        gap_pairs.erase(std::unique(gap_pairs.begin(), gap_pairs.end()), gap_pairs.end());

        // ---- association ----
        auto try_anchor_association = [&]() -> bool {
            AnchorObservation obs;
            obs.kind = anchor->kind;
            obs.hint = anchor->id;
            bool seen = false;
            if (anchor->kind == AnchorKind::bench_end) {
                for (const auto& e : ends)
                    if (e.side == anchor->side && e.row == anchor->row) {
                        obs.row = e.row;
                        obs.side = e.side;
                        obs.seq = e.seq;
                        seen = true;
                        break;
                    }
            } else {
                for (const auto& g : gaps)
                    if (g.row == anchor->row) {
                        obs.row = g.row;
                        obs.seq_left = g.seq_left;
                        obs.seq_right = g.seq_right;
                        seen = true;
                        break;
                    }
            }
            if (!seen) return false;
            ++confirm_streak;
            if (confirm_streak < config.anchor_confirm_frames) return false;
            AssociationMap amap;
            try {
                amap = associate_structure(structure, obs, model, gap_intervals);
            } catch (const std::runtime_error&) {
                return false;
            }
            for (size_t di = 0; di < structure.detections.size(); ++di) {
                const auto& d = structure.detections[di];
                const auto id = amap.lookup(d.row, d.seq);
                if (id && detection_track[di] >= 0) track_module[detection_track[di]] = *id;
            }
            return !amap.mapping.empty();
        };

        if (!initialized) {
            bool confirmed = false;
            if (structure.valid) confirmed = try_anchor_association();
            if (!structure.valid) confirm_streak = 0;
            if (confirmed) {
                initialized = true;
                report.init_frame = static_cast<long>(fi);
            } else if (processed >= config.init_max_frames) {
                throw InitializationError(
                    "anchor '" + config.anchor_hint + "' not confirmed within " +
                    std::to_string(config.init_max_frames) + " processed frames");
            }
        } else if (structure.valid) {
            // propagate association through a tracked detection
            int known_di = -1;
            for (size_t di = 0; di < structure.detections.size(); ++di) {
                const long tid = detection_track[di];
                if (tid >= 0 && track_module.count(tid)) {
                    known_di = static_cast<int>(di);
                    break;
                }
            }
            if (known_di >= 0) {
                const ModuleDetection& kd = structure.detections[known_di];
                const std::string& kid = track_module[detection_track[known_di]];
                const auto [krow, kcol] = module_grid_position(model, layout, kid);
                if (krow >= 0) {
                    const int row_off = krow - kd.row;
                    for (size_t di = 0; di < structure.detections.size(); ++di) {
                        const auto& d = structure.detections[di];
                        const long tid = detection_track[di];
                        if (tid < 0 || track_module.count(tid)) continue;
                        const int mrow = d.row + row_off;
                        if (mrow < 0 || mrow >= layout.rows) continue;
                        const int col = walk_columns(d.seq, kd.seq, kcol, gap_pairs);
                        if (col < 0 || col >= layout.total_columns()) continue;
                        track_module[tid] = layout.module_at(model, mrow, col);
                    }
                }
            } else {
                // all associated tracks lost: re-anchor when the anchor is visible
                confirm_streak = config.anchor_confirm_frames;  // immediate on sight
                try_anchor_association();
            }
        }

        // ---- correspondences + PnP ----
        const auto t_pnp = std::chrono::steady_clock::now();
        CorrespondenceSet corr;
        corr.frame_index = static_cast<long>(fi);
        for (size_t di = 0; di < structure.detections.size(); ++di) {
            const long tid = detection_track[di];
            if (tid < 0) continue;
            const auto it = track_module.find(tid);
            if (it == track_module.end()) continue;
            const PvModule* m = model.find_module(it->second);
            if (!m) continue;
            const auto& d = structure.detections[di];
            if (d.has_corners) {
                const auto world = m->corners();
                for (int ci = 0; ci < 4; ++ci) {
                    corr.image_points.push_back(d.corners[ci]);  // already undistorted
                    corr.world_points.push_back(world[ci]);
                }
            } else {
                corr.image_points.push_back(
                    cam.dist.any() ? undistort_pixel(d.center(), cam) : d.center());
                corr.world_points.push_back(m->center);
            }
        }
        rec.correspondences = static_cast<int>(corr.size());

        std::optional<PoseEstimate> est;
        if (corr.size() >= 4) {
            try {
                est = solve_epnp(corr, cam);
            } catch (const std::runtime_error&) {
                est.reset();
            }
        }
        rec.t_pnp_ms = ms_since(t_pnp);

        // ---- filter ----
        const auto t_filter = std::chrono::steady_clock::now();
        const Vec3 gnss_pos = interp_position(log.gnss, t);
        const Vec3 gnss_vel = interp_velocity(log.gnss, t);
        rec.gnss = gnss_pos;

        if (est) {
            rec.pnp_valid = true;
            rec.pnp_position = est->camera_position;
            rec.pnp_ypr = rotation_to_ypr(est->pose.R.transpose());
            rec.eps_r = est->reproj_error;
            if (calibrate_th_r &&
                static_cast<int>(th_r_samples.size()) < config.th_r_calibration_samples) {
                th_r_samples.push_back(est->reproj_error);
                gate.th_r = compute_th_r(th_r_samples);
            }
        }

        if (!filter_ready) {
            if (est) {
                state.position = est->camera_position;
                state.velocity = gnss_vel;
                state.orientation = rec.pnp_ypr;
                state.timestamp = t;
                filter_ready = true;
                rec.w_pnp = 2.0 * gate.sigma;
            }
        } else {
            const double dt = t - state.timestamp;
            FilterState pred = dt > 0 ? predict(state, dt) : state;
            Measurement z;
            z.timestamp = t;
            z.has_velocity = !log.gnss.empty();
            z.velocity = gnss_vel;
            if (est) {
                z.has_pose = true;
                z.position = est->camera_position;
                z.orientation = rec.pnp_ypr;
                z.reproj_error = est->reproj_error;
                z.deviation = (z.position - pred.position).norm();
                rec.eps_d = z.deviation;
                rec.w_pnp = pnp_weight(z.reproj_error, z.deviation, gate);
                rec.gated = rec.w_pnp == 0.0;
            }
            state = update(pred, z, gate);
        }
        rec.filter_ready = filter_ready;
        if (filter_ready) {
            rec.filt_position = state.position;
            rec.filt_ypr = state.orientation;
        }
        rec.t_filter_ms = ms_since(t_filter);

        // ---- truth comparison ----
        const Pose* truth = log.truth_at(t);
        if (truth) {
            rec.has_truth = true;
            rec.truth_position = truth->camera_center();
            rec.truth_ypr = rotation_to_ypr(truth->R.transpose());
            if (rec.pnp_valid)
                rec.err_pnp_truth = (rec.pnp_position - rec.truth_position).norm();
            if (filter_ready) {
                rec.err_filt_truth = (rec.filt_position - rec.truth_position).norm();
                rec.err_filt_gnss = (rec.filt_position - gnss_pos).norm();
                rec.ang_filt_truth = angular_distance(ypr_to_rotation(rec.filt_ypr),
                                                      truth->R.transpose());
            }
        }

        report.frames.push_back(rec);
        prev_working = working;
    }

    report.initialized = initialized;
    report.th_r_used = gate.th_r;
    report.recompute_aggregates();
    return report;
}

void RunReport::recompute_aggregates() {
    processed_frames = static_cast<int>(frames.size());
    if (frames.empty()) return;

    const long start = init_frame >= 0 ? init_frame : 0;
    int post_init = 0, valid = 0, under_r = 0, under_d = 0, detected = 0;
    double sum_eps_d = 0.0;
    int eps_d_count = 0;
    std::vector<double> filt_errors;
    double sum_pnp_err = 0.0, sum_filt_err = 0.0, sum_filt_gnss = 0.0;
    int pnp_err_count = 0, filt_err_count = 0;

    for (const auto& f : frames) {
        if (f.detections > 0) ++detected;
        if (f.frame_index < start) continue;
        ++post_init;
        if (f.pnp_valid) {
            ++valid;
            if (f.eps_r < th_r_used) ++under_r;
            if (!f.gated) ++under_d;  // gate trips only when a threshold is exceeded
            sum_eps_d += f.eps_d;
            ++eps_d_count;
        }
        if (f.pnp_valid && f.has_truth) {
            sum_pnp_err += f.err_pnp_truth;
            ++pnp_err_count;
        }
        if (f.filter_ready && f.has_truth) {
            filt_errors.push_back(f.err_filt_truth);
            sum_filt_err += f.err_filt_truth;
            sum_filt_gnss += f.err_filt_gnss;
            ++filt_err_count;
        }
    }

    valid_pnp_pct = post_init > 0 ? 100.0 * valid / post_init : 0.0;
    under_th_r_pct = valid > 0 ? 100.0 * under_r / valid : 0.0;
    under_th_d_pct = valid > 0 ? 100.0 * under_d / valid : 0.0;
    detection_success_pct = 100.0 * detected / static_cast<double>(frames.size());
    mean_eps_d = eps_d_count > 0 ? sum_eps_d / eps_d_count : 0.0;
    mean_err_pnp_truth = pnp_err_count > 0 ? sum_pnp_err / pnp_err_count : 0.0;
    mean_err_filt_truth = filt_err_count > 0 ? sum_filt_err / filt_err_count : 0.0;
    mean_err_filt_gnss = filt_err_count > 0 ? sum_filt_gnss / filt_err_count : 0.0;
    if (!filt_errors.empty()) {
        std::sort(filt_errors.begin(), filt_errors.end());
        const double h = 0.90 * (filt_errors.size() - 1);
        const size_t lo = static_cast<size_t>(h);
        const size_t hi = std::min(lo + 1, filt_errors.size() - 1);
        p90_err_filt_truth = filt_errors[lo] + (h - lo) * (filt_errors[hi] - filt_errors[lo]);
    }
}

FivePointStats five_point(std::vector<double> values) {
    FivePointStats s;
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    auto q = [&](double p) {
        const double h = p * (values.size() - 1);
        const size_t lo = static_cast<size_t>(h);
        const size_t hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (h - lo) * (values[hi] - values[lo]);
    };
    s.min = values.front();
    s.q1 = q(0.25);
    s.median = q(0.50);
    s.q3 = q(0.75);
    s.max = values.back();
    return s;
}

Summary summarize(const RunReport& report) {
    if (report.frames.empty()) throw std::runtime_error("summarize: empty report");
    std::vector<double> filt, pnp, ang, eps;
    for (const auto& f : report.frames) {
        if (f.filter_ready && f.has_truth) {
            filt.push_back(f.err_filt_truth);
            ang.push_back(f.ang_filt_truth);
        }
        if (f.pnp_valid && f.has_truth) pnp.push_back(f.err_pnp_truth);
        if (f.pnp_valid) eps.push_back(f.eps_r);
    }
    Summary s;
    s.err_filt_truth = five_point(filt);
    s.err_pnp_truth = five_point(pnp);
    s.orientation_err = five_point(ang);
    s.eps_r = five_point(eps);
    return s;
}

StageTimings time_stages(const RunReport& report) {
    StageTimings t;
    if (report.frames.empty()) return t;
    for (const auto& f : report.frames) {
        t.detect_ms += f.t_detect_ms;
        t.track_ms += f.t_track_ms;
        t.pnp_ms += f.t_pnp_ms;
        t.filter_ms += f.t_filter_ms;
    }
    const double n = static_cast<double>(report.frames.size());
    t.detect_ms /= n;
    t.track_ms /= n;
    t.pnp_ms /= n;
    t.filter_ms /= n;
    t.total_ms = t.detect_ms + t.track_ms + t.pnp_ms + t.filter_ms;
    return t;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

void write_report(const RunReport& report, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "report.csv");
    if (!csv) throw std::runtime_error("cannot write report.csv in " + out_dir);
    csv << "frame,t,detections,correspondences,gaps,ends,pnp_valid,pnp_x,pnp_y,pnp_z,"
           "pnp_yaw,pnp_pitch,pnp_roll,eps_r,eps_d,w_pnp,gated,filter_ready,"
           "filt_x,filt_y,filt_z,filt_yaw,filt_pitch,filt_roll,gnss_x,gnss_y,gnss_z,"
           "has_truth,truth_x,truth_y,truth_z,truth_yaw,truth_pitch,truth_roll,"
           "err_filt_truth,err_pnp_truth,err_filt_gnss,ang_filt_truth\n";
    for (const auto& f : report.frames) {
        csv << f.frame_index << ',' << fmt(f.timestamp) << ',' << f.detections << ','
            << f.correspondences << ',' << f.gap_observations << ',' << f.end_observations << ','
            << (f.pnp_valid ? 1 : 0) << ',' << fmt(f.pnp_position.x()) << ','
            << fmt(f.pnp_position.y()) << ',' << fmt(f.pnp_position.z()) << ','
            << fmt(f.pnp_ypr.x()) << ',' << fmt(f.pnp_ypr.y()) << ',' << fmt(f.pnp_ypr.z()) << ','
            << fmt(f.eps_r) << ',' << fmt(f.eps_d) << ',' << fmt(f.w_pnp) << ','
            << (f.gated ? 1 : 0) << ',' << (f.filter_ready ? 1 : 0) << ','
            << fmt(f.filt_position.x()) << ',' << fmt(f.filt_position.y()) << ','
            << fmt(f.filt_position.z()) << ',' << fmt(f.filt_ypr.x()) << ','
            << fmt(f.filt_ypr.y()) << ',' << fmt(f.filt_ypr.z()) << ',' << fmt(f.gnss.x()) << ','
            << fmt(f.gnss.y()) << ',' << fmt(f.gnss.z()) << ',' << (f.has_truth ? 1 : 0) << ','
            << fmt(f.truth_position.x()) << ',' << fmt(f.truth_position.y()) << ','
            << fmt(f.truth_position.z()) << ',' << fmt(f.truth_ypr.x()) << ','
            << fmt(f.truth_ypr.y()) << ',' << fmt(f.truth_ypr.z()) << ','
            << fmt(f.err_filt_truth) << ',' << fmt(f.err_pnp_truth) << ','
            << fmt(f.err_filt_gnss) << ',' << fmt(f.ang_filt_truth) << '\n';
    }
    csv.close();

    json agg;
    agg["processed_frames"] = report.processed_frames;
    agg["initialized"] = report.initialized;
    agg["init_frame"] = report.init_frame;
    agg["th_r_used"] = report.th_r_used;
    agg["valid_pnp_pct"] = report.valid_pnp_pct;
    agg["under_th_r_pct"] = report.under_th_r_pct;
    agg["under_th_d_pct"] = report.under_th_d_pct;
    agg["detection_success_pct"] = report.detection_success_pct;
    agg["mean_eps_d"] = report.mean_eps_d;
    agg["mean_err_pnp_truth"] = report.mean_err_pnp_truth;
    agg["mean_err_filt_truth"] = report.mean_err_filt_truth;
    agg["p90_err_filt_truth"] = report.p90_err_filt_truth;
    agg["mean_err_filt_gnss"] = report.mean_err_filt_gnss;
    {
        std::ofstream af(fs::path(out_dir) / "aggregates.json");
        af << agg.dump(2) << "\n";
    }

    const StageTimings st = time_stages(report);
    json tj;
    tj["detect_ms"] = st.detect_ms;
    tj["track_ms"] = st.track_ms;
    tj["pnp_ms"] = st.pnp_ms;
    tj["filter_ms"] = st.filter_ms;
    tj["total_ms"] = st.total_ms;
    {
        std::ofstream tf(fs::path(out_dir) / "timings.json");
        tf << tj.dump(2) << "\n";
    }
}

RunReport read_report(const std::string& out_dir) {
    std::ifstream csv(fs::path(out_dir) / "report.csv");
    if (!csv) throw std::runtime_error("cannot open report.csv in " + out_dir);
    RunReport report;
    std::string line;
    std::getline(csv, line);  // header
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 37) throw std::runtime_error("report.csv: bad row");
        FrameRecord f;
        int i = 0;
        auto d = [&]() { return std::stod(cells[i++]); };
        f.frame_index = static_cast<long>(d());
        f.timestamp = d();
        f.detections = static_cast<int>(d());
        f.correspondences = static_cast<int>(d());
        f.gap_observations = static_cast<int>(d());
        f.end_observations = static_cast<int>(d());
        f.pnp_valid = d() != 0;
        f.pnp_position = {d(), d(), d()};
        f.pnp_ypr = {d(), d(), d()};
        f.eps_r = d();
        f.eps_d = d();
        f.w_pnp = d();
        f.gated = d() != 0;
        f.filter_ready = d() != 0;
        f.filt_position = {d(), d(), d()};
        f.filt_ypr = {d(), d(), d()};
        f.gnss = {d(), d(), d()};
        f.has_truth = d() != 0;
        f.truth_position = {d(), d(), d()};
        f.truth_ypr = {d(), d(), d()};
        f.err_filt_truth = d();
        f.err_pnp_truth = d();
        f.err_filt_gnss = d();
        f.ang_filt_truth = d();
        report.frames.push_back(f);
    }

    std::ifstream af(fs::path(out_dir) / "aggregates.json");
    if (!af) throw std::runtime_error("cannot open aggregates.json in " + out_dir);
    json agg;
    af >> agg;
    report.th_r_used = agg.value("th_r_used", 0.0);
    report.initialized = agg.value("initialized", false);
    report.init_frame = agg.value("init_frame", -1l);

    RunReport check = report;
    check.recompute_aggregates();
    auto close = [](double a, double b) {
        return std::abs(a - b) <= 1e-4 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
    };
    if (!close(check.valid_pnp_pct, agg.value("valid_pnp_pct", 0.0)) ||
        !close(check.mean_err_filt_truth, agg.value("mean_err_filt_truth", 0.0)) ||
        !close(check.detection_success_pct, agg.value("detection_success_pct", 0.0)))
        throw std::runtime_error("report aggregates inconsistent with per-frame rows");
    report.recompute_aggregates();
    return report;
}

SimulationSpec load_simulation_spec(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open simulation spec: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("simulation spec parse error: ") + e.what());
    }
    SimulationSpec s;
    if (j.contains("layout")) {
        const json& l = j["layout"];
        s.layout.benches = get_or_int(l, "benches", s.layout.benches);
        s.layout.rows = get_or_int(l, "rows", s.layout.rows);
        s.layout.columns = get_or_int(l, "columns", s.layout.columns);
        s.layout.module_width = get_or(l, "module_width", s.layout.module_width);
        s.layout.module_height = get_or(l, "module_height", s.layout.module_height);
        s.layout.pitch = get_or(l, "pitch", s.layout.pitch);
        s.layout.gap = get_or(l, "gap", s.layout.gap);
        s.layout.row_pitch = get_or(l, "row_pitch", s.layout.row_pitch);
        s.layout.tilt_deg = get_or(l, "tilt_deg", s.layout.tilt_deg);
        s.layout.base_height = get_or(l, "base_height", s.layout.base_height);
    }
    if (j.contains("camera")) {
        const json& cj = j["camera"];
        s.camera.width = get_or_int(cj, "width", 960);
        s.camera.height = get_or_int(cj, "height", 540);
        s.camera.fx = get_or(cj, "fx", 582.0);
        s.camera.fy = get_or(cj, "fy", s.camera.fx);
        s.camera.cx = get_or(cj, "cx", s.camera.width / 2.0);
        s.camera.cy = get_or(cj, "cy", s.camera.height / 2.0);
        if (cj.contains("dist")) {
            const auto& dd = cj["dist"];
            s.camera.dist = {dd[0].get<double>(), dd[1].get<double>(), dd[2].get<double>(),
                             dd[3].get<double>(), dd[4].get<double>()};
        }
    } else {
        s.camera.width = 960;
        s.camera.height = 540;
        s.camera.fx = s.camera.fy = 582.0;
        s.camera.cx = 480.0;
        s.camera.cy = 270.0;
    }
    if (j.contains("flight")) {
        const json& fl = j["flight"];
        s.standoff = get_or(fl, "standoff", s.standoff);
        s.margin = get_or(fl, "margin", s.margin);
        s.sim.trajectory.speed = get_or(fl, "speed", 0.8);
        s.sim.fps = get_or(fl, "fps", 3.0);
    }
    if (j.contains("trajectory")) {
        const json& tj = j["trajectory"];
        s.has_explicit_trajectory = true;
        for (const auto& w : tj.at("waypoints"))
            s.sim.trajectory.waypoints.emplace_back(w[0].get<double>(), w[1].get<double>(),
                                                    w[2].get<double>());
        for (const auto& w : tj.at("look_at"))
            s.sim.trajectory.look_at.emplace_back(w[0].get<double>(), w[1].get<double>(),
                                                  w[2].get<double>());
    }
    if (j.contains("gnss")) {
        const json& g = j["gnss"];
        if (g.contains("offset")) {
            const auto& o = g["offset"];
            s.sim.gnss.offset = {o[0].get<double>(), o[1].get<double>(), o[2].get<double>()};
        }
        if (g.contains("drift")) {
            const auto& o = g["drift"];
            s.sim.gnss.drift = {o[0].get<double>(), o[1].get<double>(), o[2].get<double>()};
        }
        s.sim.gnss.jitter_sigma = get_or(g, "jitter_sigma", 0.0);
        s.sim.gnss.rate_hz = get_or(g, "rate_hz", 10.0);
        s.sim.gnss.seed = g.value("seed", j.value("seed", 1ull));
    }
    if (j.contains("render")) {
        const json& r = j["render"];
        s.sim.render.cell_level = get_or(r, "cell_level", s.sim.render.cell_level);
        s.sim.render.frame_level = get_or(r, "frame_level", s.sim.render.frame_level);
        s.sim.render.ground_level = get_or(r, "ground_level", s.sim.render.ground_level);
        s.sim.render.frame_border_px = get_or(r, "frame_border_px", s.sim.render.frame_border_px);
        s.sim.render.reference_distance_m =
            get_or(r, "reference_distance_m", s.sim.render.reference_distance_m);
        s.sim.render.noise_sigma = get_or(r, "noise_sigma", 0.0);
        s.sim.render.motion_blur_px = get_or_int(r, "motion_blur_px", 0);
        s.sim.render.noise_seed = r.value("noise_seed", j.value("seed", 1ull));
        if (r.contains("glare")) {
            const json& gl = r["glare"];
            GlareEllipse g;
            g.cx = get_or(gl, "cx", 0.0);
            g.cy = get_or(gl, "cy", 0.0);
            g.rx = get_or(gl, "rx", 10.0);
            g.ry = get_or(gl, "ry", 10.0);
            g.level = get_or(gl, "level", 255.0);
            s.sim.render.glare = g;
        }
    }
    s.sim.write_masks = j.value("write_masks", false);
    return s;
}

void run_simulation(const SimulationSpec& spec, const std::string& out_dir) {
    const PlantModel model = generate_layout(spec.layout);
    fs::create_directories(out_dir);
    save_plant_model(model, (fs::path(out_dir) / "model.json").string());
    SimulateSpec sim = spec.sim;
    if (!spec.has_explicit_trajectory) {
        const double speed = sim.trajectory.speed;
        sim.trajectory = inspection_trajectory(model, spec.standoff, speed, spec.margin);
    }
    simulate_flight(model, spec.camera, sim, out_dir);
}

}  // namespace pvloc
