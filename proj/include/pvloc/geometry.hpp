#pragma once
/**
 * @file geometry.hpp
 * @brief Camera model, poses, perspective projection and lens distortion.
 */

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace pvloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Brown-Conrady radial/tangential distortion coefficients (dimensionless).
struct Distortion {
    double k1 = 0.0, k2 = 0.0, p1 = 0.0, p2 = 0.0, k3 = 0.0;
    bool any() const { return k1 != 0 || k2 != 0 || p1 != 0 || p2 != 0 || k3 != 0; }
};

/// Pinhole camera intrinsics in pixels.
struct CameraIntrinsics {
    double fx = 0.0, fy = 0.0;
    double cx = 0.0, cy = 0.0;
    int width = 0, height = 0;
    Distortion dist;

    bool valid() const {
        return fx > 0 && fy > 0 && width > 0 && height > 0 &&
               cx > 0 && cx < width && cy > 0 && cy < height;
    }

    /// Intrinsics of the same camera after uniform image rescale by s.
    CameraIntrinsics scaled(double s) const;

    Vec2 normalize(const Vec2& px) const {
        return {(px.x() - cx) / fx, (px.y() - cy) / fy};
    }
    Vec2 denormalize(const Vec2& n) const {
        return {n.x() * fx + cx, n.y() * fy + cy};
    }
};

/// Rigid camera pose: x_cam = R * x_world + t (world -> camera).
struct Pose {
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();

    /// Camera center in world coordinates, C = R^T * (-t).
    Vec3 camera_center() const { return R.transpose() * (-t); }

    bool orthonormal(double tol = 1e-9) const;

    /// Pose of a camera at `eye` looking at `target`; +z forward, `up` resolves roll.
    static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, 0, 1));
};

Mat3 rot_x(double a);
Mat3 rot_y(double a);
Mat3 rot_z(double a);

/// Nearest rotation matrix (Frobenius) via SVD, det forced to +1.
Mat3 nearest_rotation(const Mat3& m);

/// Angular distance between two rotations, arccos((trace(Ra^T Rb) - 1) / 2).
double angular_distance(const Mat3& a, const Mat3& b);

/// Yaw-pitch-roll (ZYX) of a camera-to-world rotation; returns (yaw, pitch, roll).
Vec3 rotation_to_ypr(const Mat3& r_cam_to_world);
Mat3 ypr_to_rotation(const Vec3& ypr);

/// Applies Brown-Conrady distortion to normalized image coordinates.
Vec2 distort_normalized(const Vec2& n, const Distortion& d);

/// Inverts the distortion model by fixed-point iteration.
Vec2 undistort_normalized(const Vec2& nd, const Distortion& d, int iterations = 20);

Vec2 distort_pixel(const Vec2& px, const CameraIntrinsics& k);
Vec2 undistort_pixel(const Vec2& px, const CameraIntrinsics& k);

/// One projected point. `in_front` is false when the projective scale s <= 0,
/// in which case `px` is meaningless.
struct Projection {
    Vec2 px = Vec2::Zero();
    bool in_front = false;
    bool in_image = false;
};

Projection project_point(const Vec3& p_world, const Pose& pose, const CameraIntrinsics& k,
                         bool apply_distortion = false);

std::vector<Projection> project_points(const std::vector<Vec3>& pts, const Pose& pose,
                                       const CameraIntrinsics& k, bool apply_distortion = false);

}  // namespace pvloc
