#pragma once
/**
 * @file pose_estimator.hpp
 * @brief Camera pose recovery from 2D-3D correspondences via EPnP, scored by
 * RMS reprojection error.
 */

#include <optional>
#include <vector>

#include "pvloc/geometry.hpp"

namespace pvloc {

/// Paired image (undistorted pixels) and world (meters) points.
struct CorrespondenceSet {
    std::vector<Vec2> image_points;
    std::vector<Vec3> world_points;
    long frame_index = -1;

    size_t size() const { return image_points.size(); }
};

struct PoseEstimate {
    Pose pose;
    Vec3 camera_position = Vec3::Zero();  // C = R^T (-t)
    double reproj_error = 0.0;            // epsilon_r [px], RMS
    int n_correspondences = 0;
};

/// C = R^T (-t).
Vec3 camera_position(const Mat3& r, const Vec3& t);

/// RMS pixel disparity between projected world points and observed points.
double reprojection_error(const Pose& pose, const CorrespondenceSet& c,
                          const CameraIntrinsics& k);

/// EPnP: 4 control points (centroid + PCA axes; 3 points when the cloud is
/// planar), barycentric expansion, M^T M null space, beta cases refined by
/// Gauss-Newton, best case by reprojection error.
///
/// Throws on fewer than 4 correspondences; returns nullopt on degenerate
/// geometry (the frame then produces no measurement).
std::optional<PoseEstimate> solve_epnp(const CorrespondenceSet& c, const CameraIntrinsics& k);

}  // namespace pvloc
