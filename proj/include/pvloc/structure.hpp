#pragma once
/**
 * @file structure.hpp
 * @brief Shared per-frame detection types: oriented boxes, module detections and
 * the semantic structure (rows + sequence positions) consumed downstream.
 */

#include <array>
#include <vector>

#include "pvloc/geometry.hpp"

namespace pvloc {

/// Oriented bounding box [x_c y_c w h alpha], canonical form w >= h, alpha in [0, pi).
struct OrientedBBox {
    double xc = 0.0, yc = 0.0;
    double w = 0.0, h = 0.0;
    double angle = 0.0;
    double confidence = 1.0;

    double area() const { return w * h; }
    Vec2 center() const { return {xc, yc}; }

    /// Swaps w/h and rotates so that w >= h and angle lands in [0, pi).
    void canonicalize();

    /// Corner points, counter-clockwise in image coordinates.
    std::array<Vec2, 4> corners() const;
};

enum class DetectionSource { edge, bbox };

/// One detected PV module in an image.
struct ModuleDetection {
    std::array<Vec2, 4> corners{};  // TL, TR, BR, BL in the structure's grid frame
    bool has_corners = false;
    OrientedBBox box;
    int row = -1;      // logical row id, 0 = top row in image
    int seq = -1;      // sequence position along flight direction
    long track_id = -1;
    DetectionSource source = DetectionSource::edge;

    Vec2 center() const;
};

/// Fitted row line (point + unit direction) with member detection indices.
struct RowLine {
    Vec2 point = Vec2::Zero();
    Vec2 dir = Vec2::UnitX();
    std::vector<int> members;
};

/// Per-frame organized set of module detections with logical coordinates.
struct SemanticStructure {
    std::vector<ModuleDetection> detections;
    std::vector<RowLine> rows;
    double rep_width = 0.0;   // representative box dims [px]
    double rep_height = 0.0;
    DetectionSource source = DetectionSource::edge;
    bool valid = false;

    /// Detections of one row ordered by sequence position.
    std::vector<const ModuleDetection*> row_detections(int row) const;
    int row_count() const;
};

}  // namespace pvloc
