#pragma once
/**
 * @file optical_flow.hpp
 * @brief Sparse pyramidal Lucas-Kanade displacement estimation for module
 * feature points.
 */

#include <vector>

#include "pvloc/geometry.hpp"
#include "pvloc/image.hpp"

namespace pvloc {

struct FlowResult {
    Vec2 displacement = Vec2::Zero();
    bool valid = false;
};

struct FlowParams {
    int window_half = 7;     // correlation window half-size
    int levels = 3;          // pyramid levels
    int iterations = 20;     // LK refinement steps per level
    double min_eigen = 0.5;  // texture threshold on the normal matrix
};

/// Per-point displacement from prev to cur. Points in textureless regions or
/// leaving the image are flagged invalid. Throws on dimension mismatch.
std::vector<FlowResult> estimate_flow(const ImageU8& prev, const ImageU8& cur,
                                      const std::vector<Vec2>& points,
                                      const FlowParams& params = {});

}  // namespace pvloc
