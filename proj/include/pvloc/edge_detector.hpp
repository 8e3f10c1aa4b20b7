#pragma once
/**
 * @file edge_detector.hpp
 * @brief Classical edge-based PV module segmentation: undistortion, adaptive
 * blur, Canny, Hough, line clustering, perpendicularity filtering and 4-cycle
 * module extraction, producing corner points with logical grid coordinates.
 */

#include <optional>

#include "pvloc/geometry.hpp"
#include "pvloc/grid_graph.hpp"
#include "pvloc/image.hpp"
#include "pvloc/lines.hpp"
#include "pvloc/structure.hpp"

namespace pvloc {

/// Remaps the image so straight world lines become straight image lines.
/// A camera without distortion coefficients returns the input unchanged.
ImageU8 undistort(const ImageU8& image, const CameraIntrinsics& k);

struct EdgeDetectorParams {
    int max_dimension = 800;        // working resolution (paper-style downscale)
    double target_focus = 0.0;      // adaptive-blur focus target; <= 0 disables
    double canny_low = 0.0;         // <= 0: automatic thresholds
    double canny_high = 0.0;
    HoughParams hough;
    double cluster_stop_fraction = 0.35;  // of the expected module short side
    double angle_tol_deg = 4.0;           // Gaussian-sphere membership tolerance
    ModuleFilter filter;                  // expected module size in ORIGINAL px
};

struct EdgeDetectionResult {
    SemanticStructure structure;  // corners in original (undistorted) pixel coords
    bool no_structure = false;    // degenerate frame: too few lines or families
    int n_lines = 0;
    int n_clusters = 0;
    int blur_kernel = 1;
};

/// Full edge pipeline for one frame. `mask` (optional, original resolution,
/// nonzero = keep) limits edges to the presegmented area.
EdgeDetectionResult detect_modules_edge(const ImageU8& image, const CameraIntrinsics& k,
                                        const EdgeDetectorParams& params,
                                        const ImageU8* mask = nullptr);

}  // namespace pvloc
