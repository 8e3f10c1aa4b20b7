#pragma once
/**
 * @file grid_graph.hpp
 * @brief Line-intersection graph G(V,E) and extraction of PV modules as
 * 4-cycles with logical grid coordinates.
 */

#include <vector>

#include "pvloc/lines.hpp"
#include "pvloc/structure.hpp"

namespace pvloc {

struct GridGraph {
    std::vector<Vec2> vertices;                    // intersection points [px]
    std::vector<std::pair<int, int>> edges;        // vertex id pairs
    std::vector<std::pair<int, int>> vertex_lines; // (horizontal idx, vertical idx) per vertex
    int n_horizontal = 0;
    int n_vertical = 0;
    std::vector<int> h_numbers;  // spacing-aware line numbering (skips count for
    std::vector<int> v_numbers;  // missing lines and bench gaps)

    int vertex_at(int h, int v) const;  // -1 when the lines miss inside the image
};

/// Vertices are pairwise intersections of the representative lines of the two
/// perpendicular families inside the image; edges link consecutive vertices
/// along each line.
GridGraph build_grid_graph(const std::vector<LineCluster>& clusters, int width, int height);

struct ModuleFilter {
    double expected_w = 0.0;  // expected module size in image [px]
    double expected_h = 0.0;
    double size_tol = 0.4;    // accepted relative deviation from expected dims
    double aspect_lo = 0.5;   // band on (aspect / expected aspect)
    double aspect_hi = 2.0;
};

/// All 4-cycles of the grid graph filtered by expected in-image size and
/// aspect ratio; logical (row, column) from cycle adjacency, origin at the
/// top-left detected cell.
std::vector<ModuleDetection> extract_modules(const GridGraph& graph, const ModuleFilter& filter);

}  // namespace pvloc
