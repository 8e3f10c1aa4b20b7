#include "pvloc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pvloc/rng.hpp"
#include "pvloc/state_filter.hpp"

namespace pvloc {

using nlohmann::json;
namespace fs = std::filesystem;

PlantModel generate_layout(const LayoutSpec& spec) {
    if (spec.benches <= 0 || spec.rows <= 0 || spec.columns <= 0)
        throw std::runtime_error("layout: non-positive bench/row/column count");
    if (spec.module_width <= 0 || spec.module_height <= 0 || spec.pitch <= 0 ||
        spec.base_height <= 0)
        throw std::runtime_error("layout: non-positive dimension");
    if (spec.benches > 1 && spec.gap <= spec.pitch)
        throw std::runtime_error("layout: gap width must exceed pitch");

    const double row_pitch = spec.row_pitch > 0 ? spec.row_pitch : spec.module_height + 0.02;
    const double tilt = deg2rad(spec.tilt_deg);
    const Vec3 axis_u = Vec3::UnitX();
    const Vec3 axis_v(0.0, std::sin(tilt), std::cos(tilt));
    const Vec3 normal(0.0, -std::cos(tilt), std::sin(tilt));

    PlantModel model;
    const double bench_span = (spec.columns - 1) * spec.pitch;
    for (int b = 0; b < spec.benches; ++b) {
        Bench bench;
        bench.id = "b" + std::to_string(b);
        bench.grid.assign(spec.rows, std::vector<std::string>(spec.columns));
        const double x0 = b * (bench_span + spec.gap);
        for (int r = 0; r < spec.rows; ++r) {
            for (int c = 0; c < spec.columns; ++c) {
                PvModule m;
                m.id = "b" + std::to_string(b) + "_r" + std::to_string(r) + "_c" +
                       std::to_string(c);
                const double v_off = (spec.rows - 1 - r) * row_pitch;  // row 0 on top
                m.center = Vec3(x0 + c * spec.pitch, 0.0, spec.base_height) + axis_v * v_off;
                m.normal = normal;
                m.axis_u = axis_u;
                m.axis_v = axis_v;
                m.width = spec.module_width;
                m.height = spec.module_height;
                bench.grid[r][c] = m.id;
                model.modules.push_back(std::move(m));
            }
        }
        model.benches.push_back(std::move(bench));
    }

    for (int b = 0; b < spec.benches; ++b) {
        const Bench& bench = model.benches[b];
        for (int r = 0; r < spec.rows; ++r) {
            {
                AnchorPoint a;
                a.id = "end_b" + std::to_string(b) + "_r" + std::to_string(r) + "_L";
                a.kind = AnchorKind::bench_end;
                a.bench = bench.id;
                a.row = r;
                a.modules = {bench.grid[r].front()};
                model.anchors.push_back(std::move(a));
            }
            {
                AnchorPoint a;
                a.id = "end_b" + std::to_string(b) + "_r" + std::to_string(r) + "_R";
                a.kind = AnchorKind::bench_end;
                a.bench = bench.id;
                a.row = r;
                a.modules = {bench.grid[r].back()};
                model.anchors.push_back(std::move(a));
            }
            if (b + 1 < spec.benches) {
                AnchorPoint a;
                a.id = "gap_b" + std::to_string(b) + "_r" + std::to_string(r);
                a.kind = AnchorKind::bench_gap;
                a.bench = bench.id;
                a.row = r;
                a.modules = {bench.grid[r].back(), model.benches[b + 1].grid[r].front()};
                model.anchors.push_back(std::move(a));
            }
        }
    }

    model.validate();
    // derived anchor geometry, same rules as the loader
    for (auto& a : model.anchors) {
        if (a.kind == AnchorKind::bench_gap) {
            a.position = (model.find_module(a.modules[0])->center +
                          model.find_module(a.modules[1])->center) /
                         2.0;
        } else {
            const Bench* bench = model.find_bench(a.bench);
            const PvModule* m = model.find_module(a.modules[0]);
            a.side = bench->grid[a.row].front() == a.modules[0] ? BenchSide::left
                                                                : BenchSide::right;
            a.position = m->center + m->axis_u * (a.side == BenchSide::left ? -m->width / 2.0
                                                                            : m->width / 2.0);
        }
    }
    return model;
}

namespace {

/// Even-odd scanline fill; pixel centers at integer coordinates.
void fill_polygon(ImageU8& img, const std::vector<Vec2>& pts, std::uint8_t value) {
    if (pts.size() < 3) return;
    double ymin = pts[0].y(), ymax = pts[0].y();
    for (const auto& p : pts) {
        ymin = std::min(ymin, p.y());
        ymax = std::max(ymax, p.y());
    }
    const int y0 = std::max(0, static_cast<int>(std::ceil(ymin)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::floor(ymax)));
    std::vector<double> xs;
    for (int y = y0; y <= y1; ++y) {
        xs.clear();
        const double yc = y;
        for (size_t i = 0; i < pts.size(); ++i) {
            const Vec2& a = pts[i];
            const Vec2& b = pts[(i + 1) % pts.size()];
            if ((a.y() <= yc && b.y() > yc) || (b.y() <= yc && a.y() > yc)) {
                const double t = (yc - a.y()) / (b.y() - a.y());
                xs.push_back(a.x() + t * (b.x() - a.x()));
            }
        }
        std::sort(xs.begin(), xs.end());
        for (size_t i = 0; i + 1 < xs.size(); i += 2) {
            const int x0 = std::max(0, static_cast<int>(std::ceil(xs[i])));
            const int x1 = std::min(img.width - 1, static_cast<int>(std::floor(xs[i + 1])));
            for (int x = x0; x <= x1; ++x) img.at(x, y) = value;
        }
    }
}

/// Projects a world quad to an image polygon; subdivides edges when the camera
/// distorts so that curved boundaries render faithfully. Returns false when any
/// boundary point falls behind the camera.
bool project_quad(const std::array<Vec3, 4>& quad, const Pose& pose, const CameraIntrinsics& k,
                  std::vector<Vec2>& out) {
    out.clear();
    const int segments = k.dist.any() ? 8 : 1;
    for (int e = 0; e < 4; ++e) {
        const Vec3& a = quad[e];
        const Vec3& b = quad[(e + 1) % 4];
        for (int s = 0; s < segments; ++s) {
            const double t = static_cast<double>(s) / segments;
            const Projection pr = project_point(a + (b - a) * t, pose, k, true);
            if (!pr.in_front) return false;
            out.push_back(pr.px);
        }
    }
    return true;
}

void fill_ellipse(ImageU8& img, const GlareEllipse& g) {
    const int y0 = std::max(0, static_cast<int>(std::floor(g.cy - g.ry)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(g.cy + g.ry)));
    const int x0 = std::max(0, static_cast<int>(std::floor(g.cx - g.rx)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(g.cx + g.rx)));
    const std::uint8_t level =
        static_cast<std::uint8_t>(std::clamp(std::lround(g.level), 0l, 255l));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = (x - g.cx) / g.rx;
            const double dy = (y - g.cy) / g.ry;
            if (dx * dx + dy * dy <= 1.0) img.at(x, y) = level;
        }
}

void motion_blur_horizontal(ImageU8& img, int length) {
    if (length <= 1) return;
    ImageU8 src = img;
    const int half = length / 2;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            int sum = 0, n = 0;
            for (int dx = -half; dx <= half; ++dx) {
                const int sx = std::clamp(x + dx, 0, img.width - 1);
                sum += src.at(sx, y);
                ++n;
            }
            img.at(x, y) = static_cast<std::uint8_t>((sum + n / 2) / n);
        }
    }
}

std::uint8_t level_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
}

}  // namespace

ImageU8 render_frame(const PlantModel& model, const Pose& pose, const CameraIntrinsics& k,
                     const RenderOptions& opts) {
    ImageU8 img(k.width, k.height, level_u8(opts.ground_level));

    // far-to-near painter order
    std::vector<std::pair<double, const PvModule*>> order;
    for (const auto& m : model.modules) {
        const Vec3 pc = pose.R * m.center + pose.t;
        if (pc.z() > 0) order.emplace_back(-pc.z(), &m);
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    const double border_m = opts.frame_border_px * opts.reference_distance_m / k.fx;
    std::vector<Vec2> poly;
    for (const auto& [depth, m] : order) {
        (void)depth;
        if (!project_quad(m->corners(), pose, k, poly)) continue;
        fill_polygon(img, poly, level_u8(opts.frame_level));
        const double iw = std::max(0.0, m->width / 2.0 - border_m);
        const double ih = std::max(0.0, m->height / 2.0 - border_m);
        const Vec3 du = m->axis_u * iw, dv = m->axis_v * ih;
        const std::array<Vec3, 4> inner = {m->center - du + dv, m->center + du + dv,
                                           m->center + du - dv, m->center - du - dv};
        if (project_quad(inner, pose, k, poly)) fill_polygon(img, poly, level_u8(opts.cell_level));
    }

    if (opts.glare) fill_ellipse(img, *opts.glare);
    if (opts.motion_blur_px > 1) motion_blur_horizontal(img, opts.motion_blur_px);
    if (opts.noise_sigma > 0.0) {
        Rng rng(opts.noise_seed);
        for (auto& px : img.data) {
            const double v = px + rng.gaussian(0.0, opts.noise_sigma);
            px = level_u8(v);
        }
    }
    return img;
}

ImageU8 render_module_mask(const PlantModel& model, const Pose& pose, const CameraIntrinsics& k) {
    ImageU8 img(k.width, k.height, 0);
    std::vector<Vec2> poly;
    for (const auto& m : model.modules) {
        if (project_quad(m.corners(), pose, k, poly)) fill_polygon(img, poly, 255);
    }
    return img;
}

double trajectory_duration(const TrajectorySpec& traj) {
    double len = 0.0;
    for (size_t i = 0; i + 1 < traj.waypoints.size(); ++i)
        len += (traj.waypoints[i + 1] - traj.waypoints[i]).norm();
    return traj.speed > 0 ? len / traj.speed : 0.0;
}

Pose trajectory_pose(const TrajectorySpec& traj, double t) {
    if (traj.waypoints.empty()) throw std::runtime_error("trajectory has no waypoints");
    if (traj.waypoints.size() != traj.look_at.size())
        throw std::runtime_error("trajectory waypoint/look_at size mismatch");
    double s = std::max(0.0, t * traj.speed);
    size_t i = 0;
    while (i + 1 < traj.waypoints.size()) {
        const double seg = (traj.waypoints[i + 1] - traj.waypoints[i]).norm();
        if (s <= seg || i + 2 == traj.waypoints.size()) break;
        s -= seg;
        ++i;
    }
    if (traj.waypoints.size() == 1) return Pose::look_at(traj.waypoints[0], traj.look_at[0]);
    const double seg = (traj.waypoints[i + 1] - traj.waypoints[i]).norm();
    const double u = seg > 0 ? std::clamp(s / seg, 0.0, 1.0) : 0.0;
    const Vec3 eye = traj.waypoints[i] + (traj.waypoints[i + 1] - traj.waypoints[i]) * u;
    const Vec3 target = traj.look_at[i] + (traj.look_at[i + 1] - traj.look_at[i]) * u;
    return Pose::look_at(eye, target);
}

TrajectorySpec inspection_trajectory(const PlantModel& model, double standoff, double speed,
                                     double margin) {
    if (model.modules.empty()) throw std::runtime_error("empty model");
    const Vec3 axis = model.modules.front().axis_u;
    const Vec3 normal = model.modules.front().normal;
    Vec3 mean = Vec3::Zero();
    double lo = 1e300, hi = -1e300;
    for (const auto& m : model.modules) {
        mean += m.center;
        lo = std::min(lo, m.center.dot(axis));
        hi = std::max(hi, m.center.dot(axis));
    }
    mean /= static_cast<double>(model.modules.size());

    const Vec3 line_origin = mean - axis * mean.dot(axis);
    TrajectorySpec traj;
    traj.speed = speed;
    const Vec3 a = line_origin + axis * (lo - margin);
    const Vec3 b = line_origin + axis * (hi + margin);
    traj.waypoints = {a + normal * standoff, b + normal * standoff};
    traj.look_at = {a, b};
    return traj;
}

FlightLog simulate_flight(const PlantModel& model, const CameraIntrinsics& k,
                          const SimulateSpec& spec, const std::string& out_dir) {
    if (spec.fps <= 0) throw std::runtime_error("fps must be positive");
    if (spec.trajectory.speed <= 0) throw std::runtime_error("speed must be positive");

    fs::create_directories(out_dir);
    FlightLog log;
    log.intrinsics = k;
    log.applied_noise = spec.gnss;
    log.directory = out_dir;

    const double duration = trajectory_duration(spec.trajectory);
    const int n_frames = static_cast<int>(std::floor(duration * spec.fps)) + 1;

    // clearance check against every module rectangle
    for (int i = 0; i < n_frames; ++i) {
        const Pose pose = trajectory_pose(spec.trajectory, i / spec.fps);
        const Vec3 c = pose.camera_center();
        for (const auto& m : model.modules) {
            const Vec3 d = c - m.center;
            const double un = std::clamp(d.dot(m.axis_u), -m.width / 2.0, m.width / 2.0);
            const double vn = std::clamp(d.dot(m.axis_v), -m.height / 2.0, m.height / 2.0);
            const Vec3 nearest = m.center + m.axis_u * un + m.axis_v * vn;
            if ((c - nearest).norm() < 0.5)
                throw std::runtime_error("trajectory intersects module geometry at " + m.id);
        }
    }

    for (int i = 0; i < n_frames; ++i) {
        const double t = i / spec.fps;
        const Pose pose = trajectory_pose(spec.trajectory, t);
        RenderOptions opts = spec.render;
        opts.noise_seed = spec.render.noise_seed + static_cast<std::uint64_t>(i);
        const ImageU8 frame = render_frame(model, pose, k, opts);
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%06d.pgm", i);
        write_pgm(frame, (fs::path(out_dir) / name).string());
        if (spec.write_masks) {
            const ImageU8 mask = render_module_mask(model, pose, k);
            char mname[32];
            std::snprintf(mname, sizeof(mname), "mask_%06d.pgm", i);
            write_pgm(mask, (fs::path(out_dir) / mname).string());
        }
        log.frame_times.push_back(t);
        log.frame_files.emplace_back(name);
        log.truth.push_back({t, pose});
    }

    Rng rng(spec.gnss.seed);
    const double dt = 1.0 / std::max(1e-6, spec.gnss.rate_hz);
    for (double t = 0.0; t <= duration + 1e-9; t += dt) {
        const Pose pose = trajectory_pose(spec.trajectory, t);
        GnssSample s;
        s.t = t;
        s.pos = pose.camera_center() + spec.gnss.offset + spec.gnss.drift * t;
        if (spec.gnss.jitter_sigma > 0) {
            s.pos += Vec3(rng.gaussian(0, spec.gnss.jitter_sigma),
                          rng.gaussian(0, spec.gnss.jitter_sigma),
                          rng.gaussian(0, spec.gnss.jitter_sigma));
        }
        log.gnss.push_back(s);
    }
    // derived velocities by finite differencing the (noisy) positions
    std::vector<Vec3> pos;
    std::vector<double> times;
    for (const auto& s : log.gnss) {
        pos.push_back(s.pos);
        times.push_back(s.t);
    }
    const std::vector<Vec3> vel = derive_velocity(pos, times);
    for (size_t i = 0; i < log.gnss.size(); ++i) log.gnss[i].vel = vel[i];

    save_flight_log(log, out_dir);
    return log;
}

ImageU8 FlightLog::load_frame(size_t index) const {
    return read_pgm((fs::path(directory) / frame_files.at(index)).string());
}

const Pose* FlightLog::truth_at(double t) const {
    for (const auto& s : truth)
        if (std::abs(s.t - t) < 1e-9) return &s.pose;
    return nullptr;
}

namespace {

json intrinsics_to_json(const CameraIntrinsics& k) {
    json j;
    j["fx"] = k.fx;
    j["fy"] = k.fy;
    j["cx"] = k.cx;
    j["cy"] = k.cy;
    j["width"] = k.width;
    j["height"] = k.height;
    j["dist"] = {k.dist.k1, k.dist.k2, k.dist.p1, k.dist.p2, k.dist.k3};
    return j;
}

CameraIntrinsics intrinsics_from_json(const json& j) {
    CameraIntrinsics k;
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
    if (j.contains("dist")) {
        const auto& d = j["dist"];
        k.dist = {d[0].get<double>(), d[1].get<double>(), d[2].get<double>(), d[3].get<double>(),
                  d[4].get<double>()};
    }
    return k;
}

}  // namespace

void save_flight_log(const FlightLog& log, const std::string& dir) {
    json j;
    j["version"] = 1;
    j["intrinsics"] = intrinsics_to_json(log.intrinsics);
    j["frames"] = json::array();
    for (size_t i = 0; i < log.frame_times.size(); ++i) {
        j["frames"].push_back({{"t", log.frame_times[i]}, {"file", log.frame_files[i]}});
    }
    j["gnss"] = json::array();
    for (const auto& s : log.gnss) {
        j["gnss"].push_back({{"t", s.t},
                             {"pos", {s.pos.x(), s.pos.y(), s.pos.z()}},
                             {"vel", {s.vel.x(), s.vel.y(), s.vel.z()}}});
    }
    j["truth"] = json::array();
    for (const auto& s : log.truth) {
        json jt;
        jt["t"] = s.t;
        jt["R"] = json::array();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) jt["R"].push_back(s.pose.R(r, c));
        jt["tr"] = {s.pose.t.x(), s.pose.t.y(), s.pose.t.z()};
        j["truth"].push_back(jt);
    }
    j["gnss_noise"] = {
        {"offset", {log.applied_noise.offset.x(), log.applied_noise.offset.y(),
                    log.applied_noise.offset.z()}},
        {"drift", {log.applied_noise.drift.x(), log.applied_noise.drift.y(),
                   log.applied_noise.drift.z()}},
        {"jitter_sigma", log.applied_noise.jitter_sigma},
        {"rate_hz", log.applied_noise.rate_hz},
        {"seed", log.applied_noise.seed}};
    std::ofstream f(fs::path(dir) / "log.json");
    if (!f) throw std::runtime_error("cannot write log.json in " + dir);
    f << j.dump(2) << "\n";
}

FlightLog load_flight_log(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "log.json");
    if (!f) throw std::runtime_error("cannot open log.json in " + dir);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("log parse error: ") + e.what());
    }
    FlightLog log;
    log.directory = dir;
    log.intrinsics = intrinsics_from_json(j.at("intrinsics"));
    for (const auto& jf : j.at("frames")) {
        log.frame_times.push_back(jf.at("t").get<double>());
        log.frame_files.push_back(jf.at("file").get<std::string>());
    }
    for (const auto& jg : j.value("gnss", json::array())) {
        GnssSample s;
        s.t = jg.at("t").get<double>();
        const auto& p = jg.at("pos");
        s.pos = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
        if (jg.contains("vel")) {
            const auto& v = jg["vel"];
            s.vel = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
        }
        log.gnss.push_back(s);
    }
    for (const auto& jt : j.value("truth", json::array())) {
        TruthSample s;
        s.t = jt.at("t").get<double>();
        const auto& r = jt.at("R");
        for (int i = 0; i < 9; ++i) s.pose.R(i / 3, i % 3) = r[i].get<double>();
        const auto& tr = jt.at("tr");
        s.pose.t = {tr[0].get<double>(), tr[1].get<double>(), tr[2].get<double>()};
        log.truth.push_back(s);
    }
    if (j.contains("gnss_noise")) {
        const auto& n = j["gnss_noise"];
        const auto& off = n.at("offset");
        log.applied_noise.offset = {off[0].get<double>(), off[1].get<double>(),
                                    off[2].get<double>()};
        const auto& dr = n.at("drift");
        log.applied_noise.drift = {dr[0].get<double>(), dr[1].get<double>(), dr[2].get<double>()};
        log.applied_noise.jitter_sigma = n.value("jitter_sigma", 0.0);
        log.applied_noise.rate_hz = n.value("rate_hz", 10.0);
        log.applied_noise.seed = n.value("seed", 1ull);
    }
    // strictly increasing timestamps
    for (size_t i = 1; i < log.frame_times.size(); ++i)
        if (log.frame_times[i] <= log.frame_times[i - 1])
            throw std::runtime_error("frame timestamps not strictly increasing");
    return log;
}

}  // namespace pvloc
