#pragma once
/**
 * @file bbox_structure.hpp
 * @brief Post-processing of externally supplied oriented-box/mask detections
 * into the semantic structure consumed downstream: border/overlap filtering,
 * representative-size selection, sequential RANSAC row fitting and sequence
 * position assignment with gap insertion.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pvloc/structure.hpp"

namespace pvloc {

/// Per-frame detections loaded from the detection file; a frame may carry
/// boxes, contours (converted through min_bounding_rect) or both.
struct DetectionFrames {
    std::vector<std::vector<OrientedBBox>> frames;
    std::vector<long> indices;  // flight-log frame index per entry
};

/// Loads the per-flight detection JSON. Throws on parse errors or invalid
/// boxes (e.g. negative width).
DetectionFrames load_detections(const std::string& path);

/// Minimum-area oriented bounding rectangle over the convex hull of the
/// points (rotating calipers over hull edges). Throws on fewer than 3
/// non-collinear points.
OrientedBBox min_bounding_rect(const std::vector<Vec2>& contour);

/// Intersection-over-union of two oriented boxes.
double oriented_iou(const OrientedBBox& a, const OrientedBBox& b);

struct BoxFilterParams {
    double iou_threshold = 0.20;     // overlapping pairs resolved above this
    double size_divergence = 0.35;   // accepted relative deviation from the representative
    double border_margin = 0.5;      // [px] corner-to-border distance counting as "on edge"
    std::optional<Vec2> expected_dims;  // optional prior from the flight plan
};

struct BoxFilterResult {
    std::vector<OrientedBBox> boxes;
    double rep_width = 0.0;   // representative box dims (75th percentile by area)
    double rep_height = 0.0;
};

/// Border-touching boxes removed; overlapping pairs (IoU > threshold) keep the
/// higher-confidence box; representative picked at rank floor(0.75*(n-1)) of
/// the area-ascending order; boxes outside +/- size_divergence of it removed.
BoxFilterResult filter_boxes(const std::vector<OrientedBBox>& boxes, int image_width,
                             int image_height, const BoxFilterParams& params = {});

struct RowFitParams {
    double residual_fraction = 0.20;  // threshold = fraction * representative height
    int ransac_iterations = 200;
    double parallel_tol_deg = 10.0;
    std::uint64_t seed = 1;
};

struct RowFit {
    std::vector<RowLine> rows;       // ordered top to bottom
    std::vector<int> assignments;    // per center: row index or -1 (outlier)
};

/// Sequential RANSAC line fitting of box centers: fit, remove inliers, repeat
/// while >= 2 points remain; lines failing the parallelism check are discarded
/// with their points marked outliers. Throws when no line reaches 2 inliers.
RowFit fit_rows(const std::vector<Vec2>& centers, double rep_height,
                const RowFitParams& params = {});

/// Sorts each row along the flight direction and assigns sequence positions;
/// spacing anomalies (> 1.5x the median) insert round(spacing/median)-1
/// skipped positions. flight_direction_sign flips the ordering.
SemanticStructure assign_sequence(const std::vector<OrientedBBox>& boxes, const RowFit& fit,
                                  double rep_width, double rep_height,
                                  int flight_direction_sign = 1);

/// Full bbox path for one frame: filter, fit rows, assign sequences.
SemanticStructure detect_modules_bbox(const std::vector<OrientedBBox>& raw_boxes, int image_width,
                                      int image_height, const BoxFilterParams& box_params = {},
                                      const RowFitParams& row_params = {},
                                      int flight_direction_sign = 1);

}  // namespace pvloc
