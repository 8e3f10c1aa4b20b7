#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "pvloc/synthetic.hpp"

using namespace pvloc;

namespace {

CameraIntrinsics sim_camera() {
    CameraIntrinsics k;
    k.fx = k.fy = 582.0;
    k.cx = 480.0;
    k.cy = 270.0;
    k.width = 960;
    k.height = 540;
    return k;
}

}  // namespace

TEST_CASE("PPA-like layout: 3 benches x 2 rows x 26 columns is about 154 modules") {
    LayoutSpec spec;
    spec.benches = 3;
    spec.rows = 2;
    spec.columns = 26;
    const PlantModel m = generate_layout(spec);
    CHECK(m.modules.size() == 156);  // uniform grid closest to the 154 of the reference plant
    CHECK(std::abs(static_cast<int>(m.modules.size()) - 154) <= 5);
}

TEST_CASE("PPB-like layout: 2 benches x 5 rows x 35 columns = 350 modules") {
    LayoutSpec spec;
    spec.benches = 2;
    spec.rows = 5;
    spec.columns = 35;
    spec.module_width = 2.0;  // horizontally mounted
    spec.module_height = 1.0;
    const PlantModel m = generate_layout(spec);
    CHECK(m.modules.size() == 350);
    CHECK(m.benches[0].cols() == 35);
}

TEST_CASE("single-module layout has two bench-end anchors and no gaps") {
    LayoutSpec spec;
    spec.benches = 1;
    spec.rows = 1;
    spec.columns = 1;
    const PlantModel m = generate_layout(spec);
    CHECK(m.modules.size() == 1);
    int ends = 0, gaps = 0;
    for (const auto& a : m.anchors) (a.kind == AnchorKind::bench_end ? ends : gaps)++;
    CHECK(ends == 2);
    CHECK(gaps == 0);
}

TEST_CASE("non-positive dimensions are rejected") {
    LayoutSpec spec;
    spec.module_width = -1.0;
    CHECK_THROWS_AS(generate_layout(spec), std::runtime_error);
    LayoutSpec spec2;
    spec2.benches = 0;
    CHECK_THROWS_AS(generate_layout(spec2), std::runtime_error);
}

TEST_CASE("rendered module corners lie within 1 px of projected world corners") {
    LayoutSpec lspec;
    lspec.benches = 1;
    lspec.rows = 1;
    lspec.columns = 1;
    const PlantModel model = generate_layout(lspec);
    const CameraIntrinsics k = sim_camera();
    const PvModule& m = model.modules.front();
    const Pose pose = Pose::look_at(m.center + m.normal * 10.0, m.center);

    RenderOptions opts;
    opts.ground_level = 0;  // black ground isolates the bright frame boundary
    opts.frame_level = 255;
    const ImageU8 img = render_frame(model, pose, k, opts);

    const auto corners = m.corners();
    for (int ci = 0; ci < 4; ++ci) {
        const Projection pr = project_point(corners[ci], pose, k);
        REQUIRE(pr.in_image);
        // bisect along the diagonal through the corner for the bright/dark edge
        const Vec2 inward = (project_point(m.center, pose, k).px - pr.px).normalized();
        double lo = -3.0, hi = 3.0;  // offset along inward diagonal
        auto bright = [&](double s) {
            const Vec2 p = pr.px + inward * s;
            return img.sample(p.x(), p.y()) > 127.0;
        };
        REQUIRE(bright(hi));
        REQUIRE_FALSE(bright(lo));
        for (int it = 0; it < 40; ++it) {
            const double mid = (lo + hi) / 2;
            (bright(mid) ? hi : lo) = mid;
        }
        CHECK(std::abs((lo + hi) / 2) <= 1.0);
    }
}

TEST_CASE("frontal render shows a bright outline enclosing a dark cell") {
    LayoutSpec lspec;
    lspec.benches = 1;
    lspec.rows = 1;
    lspec.columns = 1;
    const PlantModel model = generate_layout(lspec);
    const CameraIntrinsics k = sim_camera();
    const PvModule& m = model.modules.front();
    const Pose pose = Pose::look_at(m.center + m.normal * 10.0, m.center);
    RenderOptions opts;
    const ImageU8 img = render_frame(model, pose, k, opts);

    const Vec2 center_px = project_point(m.center, pose, k).px;
    CHECK(img.sample(center_px.x(), center_px.y()) ==
          doctest::Approx(opts.cell_level).epsilon(0.1));
    // frame band midway along the top edge
    const Vec3 top_mid = m.center + m.axis_v * (m.height / 2.0 - 0.01);
    const Vec2 band_px = project_point(top_mid, pose, k).px;
    CHECK(img.sample(band_px.x(), band_px.y()) > 127);
    // ground far out
    CHECK(img.at(5, 5) == doctest::Approx(opts.ground_level));
}

TEST_CASE("render is deterministic with blur 0 and sigma 0") {
    LayoutSpec lspec;
    lspec.benches = 1;
    lspec.rows = 2;
    lspec.columns = 3;
    const PlantModel model = generate_layout(lspec);
    const CameraIntrinsics k = sim_camera();
    const Pose pose = Pose::look_at(Vec3(1, -10, 2), Vec3(1, 0, 2));
    RenderOptions opts;
    const ImageU8 a = render_frame(model, pose, k, opts);
    const ImageU8 b = render_frame(model, pose, k, opts);
    CHECK(a.data == b.data);
}

TEST_CASE("simulated flight: spacing, zero-noise GNSS, offset, truth on trajectory") {
    LayoutSpec lspec;
    lspec.benches = 1;
    lspec.rows = 2;
    lspec.columns = 6;
    const PlantModel model = generate_layout(lspec);
    const CameraIntrinsics k = sim_camera();

    const auto dir = std::filesystem::temp_directory_path() / "pvloc_sim_test";
    std::filesystem::remove_all(dir);

    SimulateSpec spec;
    spec.trajectory = inspection_trajectory(model, 12.0, 0.8, 1.0);
    spec.fps = 3.0;
    const FlightLog log = simulate_flight(model, k, spec, dir.string());

    REQUIRE(log.frame_times.size() > 3);
    // frame spacing <= 0.33 m at 0.8 m/s and 3 fps
    for (size_t i = 1; i < log.truth.size(); ++i) {
        const double d = (log.truth[i].pose.camera_center() -
                          log.truth[i - 1].pose.camera_center())
                             .norm();
        CHECK(d <= 0.33);
        CHECK(d == doctest::Approx(0.8 / 3.0).epsilon(1e-6));
    }
    // zero noise: GNSS equals truth positions along the trajectory
    for (const auto& g : log.gnss) {
        const Pose p = trajectory_pose(spec.trajectory, g.t);
        CHECK((g.pos - p.camera_center()).norm() < 1e-12);
    }
    // truth poses lie exactly on the commanded trajectory
    for (const auto& t : log.truth) {
        const Pose p = trajectory_pose(spec.trajectory, t.t);
        CHECK((t.pose.camera_center() - p.camera_center()).norm() < 1e-9);
    }

    // constant offset shows up verbatim
    SimulateSpec offset_spec = spec;
    offset_spec.gnss.offset = Vec3(3, 0, 0);
    const auto dir2 = std::filesystem::temp_directory_path() / "pvloc_sim_test2";
    std::filesystem::remove_all(dir2);
    const FlightLog log2 = simulate_flight(model, k, offset_spec, dir2.string());
    for (const auto& g : log2.gnss) {
        const Pose p = trajectory_pose(spec.trajectory, g.t);
        CHECK((g.pos - p.camera_center() - Vec3(3, 0, 0)).norm() < 1e-12);
    }

    // round trip through log.json
    const FlightLog loaded = load_flight_log(dir.string());
    CHECK(loaded.frame_times.size() == log.frame_times.size());
    CHECK(loaded.gnss.size() == log.gnss.size());
    CHECK((loaded.truth.front().pose.R - log.truth.front().pose.R).norm() < 1e-12);
    const ImageU8 f0 = loaded.load_frame(0);
    CHECK(f0.width == k.width);
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("trajectory through the bench geometry is rejected") {
    LayoutSpec lspec;
    lspec.benches = 1;
    lspec.rows = 2;
    lspec.columns = 6;
    const PlantModel model = generate_layout(lspec);
    const CameraIntrinsics k = sim_camera();
    SimulateSpec spec;
    spec.trajectory.speed = 1.0;
    spec.trajectory.waypoints = {model.modules.front().center - Vec3(2, 0, 0),
                                 model.modules.back().center + Vec3(2, 0, 0)};
    spec.trajectory.look_at = {model.modules.front().center, model.modules.back().center};
    const auto dir = std::filesystem::temp_directory_path() / "pvloc_sim_crash";
    CHECK_THROWS_WITH_AS(simulate_flight(model, k, spec, dir.string()),
                         doctest::Contains("intersects"), std::runtime_error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("project/undistort consistency on a distorted camera") {
    CameraIntrinsics k = sim_camera();
    k.dist.k1 = 0.1;
    LayoutSpec lspec;
    lspec.benches = 1;
    lspec.rows = 1;
    lspec.columns = 3;
    const PlantModel model = generate_layout(lspec);
    const PvModule& m = model.modules[1];
    const Pose pose = Pose::look_at(m.center + m.normal * 10.0, m.center);
    for (const auto& mod : model.modules)
        for (const auto& c : mod.corners()) {
            const Projection distorted = project_point(c, pose, k, true);
            const Projection pinhole = project_point(c, pose, k, false);
            if (!distorted.in_image || !pinhole.in_front) continue;
            CHECK((undistort_pixel(distorted.px, k) - pinhole.px).norm() < 0.05);
        }
}
