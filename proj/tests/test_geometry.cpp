#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pvloc/geometry.hpp"
#include "pvloc/rng.hpp"

using namespace pvloc;

namespace {

CameraIntrinsics test_camera() {
    CameraIntrinsics k;
    k.fx = k.fy = 1000.0;
    k.cx = 960.0;
    k.cy = 540.0;
    k.width = 1920;
    k.height = 1080;
    return k;
}

}  // namespace

TEST_CASE("projection on the optical axis lands on the principal point") {
    const CameraIntrinsics k = test_camera();
    const Pose identity;
    const Projection p = project_point({0, 0, 5}, identity, k);
    CHECK(p.in_front);
    CHECK(p.px.x() == doctest::Approx(960.0).epsilon(1e-12));
    CHECK(p.px.y() == doctest::Approx(540.0).epsilon(1e-12));
}

TEST_CASE("lateral offset projects by f*x/z") {
    const CameraIntrinsics k = test_camera();
    const Pose identity;
    const Projection p = project_point({1, 0, 5}, identity, k);
    CHECK(p.in_front);
    CHECK(p.px.x() == doctest::Approx(1160.0).epsilon(1e-12));  // 1000/5 + 960
    CHECK(p.px.y() == doctest::Approx(540.0).epsilon(1e-12));
}

TEST_CASE("point behind the camera is flagged invisible") {
    const CameraIntrinsics k = test_camera();
    const Pose identity;
    const Projection p = project_point({0, 0, -1}, identity, k);
    CHECK_FALSE(p.in_front);
    CHECK_FALSE(p.in_image);
}

TEST_CASE("distort/undistort round trip stays within 0.05 px") {
    CameraIntrinsics k = test_camera();
    k.dist.k1 = 0.2;
    k.dist.k2 = -0.03;
    k.dist.p1 = 0.001;
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const Vec2 p(rng.uniform(100.0, 1820.0), rng.uniform(100.0, 980.0));
        const Vec2 round = distort_pixel(undistort_pixel(p, k), k);
        CHECK((round - p).norm() < 0.05);
    }
}

TEST_CASE("undistortion of distorted projections recovers pinhole coordinates") {
    CameraIntrinsics k = test_camera();
    k.dist.k1 = 0.2;
    const Pose identity;
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const Vec3 pw(rng.uniform(-4.0, 4.0), rng.uniform(-2.0, 2.0), rng.uniform(8.0, 20.0));
        const Projection pinhole = project_point(pw, identity, k, false);
        const Projection distorted = project_point(pw, identity, k, true);
        if (!pinhole.in_image || !distorted.in_front) continue;
        const Vec2 und = undistort_pixel(distorted.px, k);
        CHECK((und - pinhole.px).norm() < 0.05);
    }
}

TEST_CASE("look_at produces an orthonormal world-to-camera pose") {
    const Pose p = Pose::look_at({0, -12, 2}, {0, 0, 2});
    CHECK(p.orthonormal());
    // forward ray hits the target
    const Vec3 cam_target = p.R * Vec3(0, 0, 2) + p.t;
    CHECK(cam_target.x() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cam_target.y() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cam_target.z() == doctest::Approx(12.0).epsilon(1e-12));
    CHECK((p.camera_center() - Vec3(0, -12, 2)).norm() < 1e-12);
}

TEST_CASE("angular distance of a 10 degree rotation is 10 degrees") {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
        axis.normalize();
        const Mat3 r0 = ypr_to_rotation({rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5),
                                         rng.uniform(-1.0, 1.0)});
        const Mat3 delta = Eigen::AngleAxisd(deg2rad(10.0), axis).toRotationMatrix();
        CHECK(angular_distance(r0, delta * r0) == doctest::Approx(deg2rad(10.0)).epsilon(1e-9));
    }
}

TEST_CASE("ypr round trip") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const Vec3 ypr(rng.uniform(-3.0, 3.0), rng.uniform(-1.4, 1.4), rng.uniform(-3.0, 3.0));
        const Mat3 r = ypr_to_rotation(ypr);
        const Vec3 back = rotation_to_ypr(r);
        CHECK((r - ypr_to_rotation(back)).norm() < 1e-12);
    }
}

TEST_CASE("wrap_angle lands in (-pi, pi]") {
    CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(3 * kPi / 2) == doctest::Approx(-kPi / 2));
    CHECK(wrap_angle(0.1) == doctest::Approx(0.1));
}
