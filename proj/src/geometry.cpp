#include "pvloc/geometry.hpp"

#include <Eigen/SVD>

namespace pvloc {

double wrap_angle(double a) {
    a = std::fmod(a, 2.0 * kPi);
    if (a <= -kPi) a += 2.0 * kPi;
    if (a > kPi) a -= 2.0 * kPi;
    return a;
}

CameraIntrinsics CameraIntrinsics::scaled(double s) const {
    CameraIntrinsics out = *this;
    out.fx = fx * s;
    out.fy = fy * s;
    out.cx = cx * s;
    out.cy = cy * s;
    out.width = static_cast<int>(std::lround(width * s));
    out.height = static_cast<int>(std::lround(height * s));
    // normalized-coordinate distortion is invariant under uniform rescale
    return out;
}

bool Pose::orthonormal(double tol) const {
    if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(R.determinant() - 1.0) <= tol;
}

Pose Pose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    const Vec3 fwd = (target - eye).normalized();
    Vec3 right = fwd.cross(up);
    if (right.norm() < 1e-12) right = fwd.cross(Vec3(0, 1, 0));
    right.normalize();
    const Vec3 down = fwd.cross(right).normalized();
    Mat3 r;  // rows: camera x (right), y (down), z (forward) in world coords
    r.row(0) = right;
    r.row(1) = down;
    r.row(2) = fwd;
    Pose p;
    p.R = r;
    p.t = -(r * eye);
    return p;
}

Mat3 rot_x(double a) {
    Mat3 m;
    m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
    return m;
}

Mat3 rot_y(double a) {
    Mat3 m;
    m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
    return m;
}

Mat3 rot_z(double a) {
    Mat3 m;
    m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    return m;
}

Mat3 nearest_rotation(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0) {
        Mat3 d = Mat3::Identity();
        d(2, 2) = -1.0;
        r = svd.matrixU() * d * svd.matrixV().transpose();
    }
    return r;
}

double angular_distance(const Mat3& a, const Mat3& b) {
    const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
    return std::acos(std::clamp(c, -1.0, 1.0));
}

Vec3 rotation_to_ypr(const Mat3& r) {
    // ZYX convention: r = Rz(yaw) * Ry(pitch) * Rx(roll)
    const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
    double yaw, roll;
    if (std::abs(r(2, 0)) < 1.0 - 1e-12) {
        yaw = std::atan2(r(1, 0), r(0, 0));
        roll = std::atan2(r(2, 1), r(2, 2));
    } else {
        // gimbal lock: roll folded into yaw
        yaw = std::atan2(-r(0, 1), r(1, 1));
        roll = 0.0;
    }
    return {yaw, pitch, roll};
}

Mat3 ypr_to_rotation(const Vec3& ypr) {
    return rot_z(ypr.x()) * rot_y(ypr.y()) * rot_x(ypr.z());
}

Vec2 distort_normalized(const Vec2& n, const Distortion& d) {
    const double x = n.x(), y = n.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
    const double xd = x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
    const double yd = y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
    return {xd, yd};
}

Vec2 undistort_normalized(const Vec2& nd, const Distortion& d, int iterations) {
    Vec2 n = nd;
    for (int i = 0; i < iterations; ++i) {
        const Vec2 err = distort_normalized(n, d) - nd;
        n -= err;
        if (err.cwiseAbs().maxCoeff() < 1e-14) break;
    }
    return n;
}

Vec2 distort_pixel(const Vec2& px, const CameraIntrinsics& k) {
    return k.denormalize(distort_normalized(k.normalize(px), k.dist));
}

Vec2 undistort_pixel(const Vec2& px, const CameraIntrinsics& k) {
    return k.denormalize(undistort_normalized(k.normalize(px), k.dist));
}

Projection project_point(const Vec3& p_world, const Pose& pose, const CameraIntrinsics& k,
                         bool apply_distortion) {
    Projection out;
    const Vec3 pc = pose.R * p_world + pose.t;
    if (pc.z() <= 0.0) return out;
    out.in_front = true;
    Vec2 n(pc.x() / pc.z(), pc.y() / pc.z());
    if (apply_distortion && k.dist.any()) n = distort_normalized(n, k.dist);
    out.px = k.denormalize(n);
    out.in_image = out.px.x() >= 0.0 && out.px.x() < k.width && out.px.y() >= 0.0 &&
                   out.px.y() < k.height;
    return out;
}

std::vector<Projection> project_points(const std::vector<Vec3>& pts, const Pose& pose,
                                       const CameraIntrinsics& k, bool apply_distortion) {
    std::vector<Projection> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(project_point(p, pose, k, apply_distortion));
    return out;
}

}  // namespace pvloc
