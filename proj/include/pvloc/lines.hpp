#pragma once
/**
 * @file lines.hpp
 * @brief Hough line detection with orientation classes, the Hausdorff line
 * metric, hierarchical line clustering and Gaussian-sphere perpendicularity
 * filtering.
 */

#include <optional>
#include <vector>

#include "pvloc/geometry.hpp"
#include "pvloc/image.hpp"

namespace pvloc {

/// A detected image line in two-border-point form. `angle` is the direction
/// angle in [0, pi); rho is the signed offset along the normal (-sin a, cos a).
struct ImageLine {
    Vec2 p0 = Vec2::Zero();  // border points, clipped to the image bounds
    Vec2 p1 = Vec2::Zero();
    double angle = 0.0;
    double rho = 0.0;
    double weight = 0.0;  // accumulator score
    int family = -1;      // 0 = horizontal class, 1 = vertical class

    Vec2 dir() const { return {std::cos(angle), std::sin(angle)}; }
    Vec2 normal() const { return {-std::sin(angle), std::cos(angle)}; }
};

/// Builds an ImageLine from (angle, rho), clipping the border points to the
/// [0, w-1] x [0, h-1] rectangle. Returns nullopt if the line misses it.
std::optional<ImageLine> make_line(double angle, double rho, int width, int height);

struct HoughParams {
    double rho_res = 1.0;
    double theta_res_deg = 1.0;
    double weight_threshold_vertical = 50.0;
    double weight_ratio_horizontal = 1.5;  // horizontal threshold = ratio * vertical
    double family_band_deg = 20.0;         // orientation class half-width
};

/// rho-theta Hough transform over edge pixels. Lines are classified into the
/// two dominant orientation families and pass their class weight threshold.
std::vector<ImageLine> hough_lines(const ImageU8& edges, const HoughParams& params);

struct DetectLinesParams {
    double canny_low = 0.0;   // <= 0: automatic (0.4 * high)
    double canny_high = 0.0;  // <= 0: Otsu of the gradient magnitude
    HoughParams hough;
};

/// Canny followed by hough_lines.
std::vector<ImageLine> detect_lines(const ImageU8& image, const DetectLinesParams& params);

/// Distance from a point to the infinite line through l.
double point_line_distance(const Vec2& p, const ImageLine& l);

/// H(L,K) = max(d(l0,K), d(l1,K), d(k0,L), d(k1,L)). Throws on a degenerate
/// line (identical border points).
double hausdorff_line_distance(const ImageLine& a, const ImageLine& b);

struct LineCluster {
    std::vector<ImageLine> members;
    ImageLine representative;  // vector mean (angles doubled before averaging)
};

/// Agglomerative single-linkage clustering under the Hausdorff metric, halted
/// when the minimum inter-cluster distance reaches stop_threshold. Ties merge
/// the lexicographically smallest pair, so the result is order-invariant.
std::vector<LineCluster> cluster_lines(const std::vector<ImageLine>& lines, double stop_threshold,
                                       int width, int height);

struct PerpendicularFilterResult {
    std::vector<LineCluster> clusters;  // kept clusters, family reassigned
    Vec3 vanishing_a = Vec3::Zero();    // camera-frame vanishing directions
    Vec3 vanishing_b = Vec3::Zero();
};

/// Maps each representative line to a great-circle normal on the Gaussian
/// sphere, estimates the vanishing direction of the two dominant parallel
/// families and keeps only lines belonging to one of them within angle_tol.
/// Returns nullopt when either family has fewer than two lines or the families
/// are far from perpendicular (frame skipped).
std::optional<PerpendicularFilterResult> filter_perpendicular(
    const std::vector<LineCluster>& clusters, const CameraIntrinsics& k, double angle_tol_rad,
    double perp_tol_rad = 0.26179938779914941);  // 15 deg

}  // namespace pvloc
