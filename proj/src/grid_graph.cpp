#include "pvloc/grid_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

namespace pvloc {

int GridGraph::vertex_at(int h, int v) const {
    for (size_t i = 0; i < vertex_lines.size(); ++i)
        if (vertex_lines[i].first == h && vertex_lines[i].second == v)
            return static_cast<int>(i);
    return -1;
}

namespace {

/// Intersection of two lines in (angle, rho) form; nullopt if near-parallel.
std::optional<Vec2> line_intersection(const ImageLine& a, const ImageLine& b) {
    const Vec2 na = a.normal(), nb = b.normal();
    const double det = na.x() * nb.y() - na.y() * nb.x();
    if (std::abs(det) < 1e-9) return std::nullopt;
    const double x = (a.rho * nb.y() - b.rho * na.y()) / det;
    const double y = (na.x() * b.rho - nb.x() * a.rho) / det;
    return Vec2(x, y);
}

/// Position of a line within its family: intercept at the image center along
/// the family's cross direction.
double line_position(const ImageLine& l, double cx, double cy, bool horizontal) {
    // line: n . p = rho
    const Vec2 n = l.normal();
    if (horizontal) {
        // y at x = cx
        if (std::abs(n.y()) < 1e-9) return l.rho;
        return (l.rho - n.x() * cx) / n.y();
    }
    if (std::abs(n.x()) < 1e-9) return l.rho;
    return (l.rho - n.y() * cy) / n.x();
}

/// Spacing-aware numbering: consecutive lines separated by about k median
/// spacings advance the number by k, so missing lines and bench gaps keep the
/// downstream grid coordinates aligned.
std::vector<int> spacing_numbers(const std::vector<double>& positions) {
    const int n = static_cast<int>(positions.size());
    std::vector<int> numbers(n, 0);
    if (n < 2) return numbers;
    std::vector<double> gaps;
    for (int i = 0; i + 1 < n; ++i) gaps.push_back(positions[i + 1] - positions[i]);
    std::vector<double> sorted = gaps;
    std::sort(sorted.begin(), sorted.end());
    const double med = sorted[sorted.size() / 2];
    for (int i = 0; i + 1 < n; ++i) {
        int step = 1;
        if (med > 1e-9) step = std::max(1, static_cast<int>(std::lround(gaps[i] / med)));
        numbers[i + 1] = numbers[i] + step;
    }
    return numbers;
}

}  // namespace

GridGraph build_grid_graph(const std::vector<LineCluster>& clusters, int width, int height) {
    GridGraph g;
    std::vector<ImageLine> horizontal, vertical;
    for (const auto& c : clusters) {
        if (c.representative.family == 1)
            vertical.push_back(c.representative);
        else
            horizontal.push_back(c.representative);
    }
    const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
    std::sort(horizontal.begin(), horizontal.end(), [&](const ImageLine& a, const ImageLine& b) {
        return line_position(a, cx, cy, true) < line_position(b, cx, cy, true);
    });
    std::sort(vertical.begin(), vertical.end(), [&](const ImageLine& a, const ImageLine& b) {
        return line_position(a, cx, cy, false) < line_position(b, cx, cy, false);
    });
    g.n_horizontal = static_cast<int>(horizontal.size());
    g.n_vertical = static_cast<int>(vertical.size());

    std::vector<double> h_pos, v_pos;
    for (const auto& l : horizontal) h_pos.push_back(line_position(l, cx, cy, true));
    for (const auto& l : vertical) v_pos.push_back(line_position(l, cx, cy, false));
    g.h_numbers = spacing_numbers(h_pos);
    g.v_numbers = spacing_numbers(v_pos);

    // vertices: cross-family intersections inside the image
    std::map<std::pair<int, int>, int> index;
    for (int h = 0; h < g.n_horizontal; ++h)
        for (int v = 0; v < g.n_vertical; ++v) {
            const auto p = line_intersection(horizontal[h], vertical[v]);
            if (!p) continue;
            if (p->x() < 0 || p->x() > width - 1 || p->y() < 0 || p->y() > height - 1) continue;
            index[{h, v}] = static_cast<int>(g.vertices.size());
            g.vertices.push_back(*p);
            g.vertex_lines.emplace_back(h, v);
        }

    // edges between consecutive vertices along each line
    for (int h = 0; h < g.n_horizontal; ++h) {
        std::vector<std::pair<double, int>> on_line;
        for (size_t i = 0; i < g.vertices.size(); ++i)
            if (g.vertex_lines[i].first == h)
                on_line.emplace_back(g.vertices[i].dot(horizontal[h].dir()), static_cast<int>(i));
        std::sort(on_line.begin(), on_line.end());
        for (size_t i = 0; i + 1 < on_line.size(); ++i)
            g.edges.emplace_back(on_line[i].second, on_line[i + 1].second);
    }
    for (int v = 0; v < g.n_vertical; ++v) {
        std::vector<std::pair<double, int>> on_line;
        for (size_t i = 0; i < g.vertices.size(); ++i)
            if (g.vertex_lines[i].second == v)
                on_line.emplace_back(g.vertices[i].dot(vertical[v].dir()), static_cast<int>(i));
        std::sort(on_line.begin(), on_line.end());
        for (size_t i = 0; i + 1 < on_line.size(); ++i)
            g.edges.emplace_back(on_line[i].second, on_line[i + 1].second);
    }
    return g;
}

namespace {

bool convex_quad(const std::array<Vec2, 4>& q) {
    double sign = 0.0;
    for (int i = 0; i < 4; ++i) {
        const Vec2 a = q[(i + 1) % 4] - q[i];
        const Vec2 b = q[(i + 2) % 4] - q[(i + 1) % 4];
        const double cross = a.x() * b.y() - a.y() * b.x();
        if (std::abs(cross) < 1e-12) return false;
        if (sign == 0.0)
            sign = cross;
        else if (sign * cross < 0)
            return false;
    }
    return true;
}

}  // namespace

std::vector<ModuleDetection> extract_modules(const GridGraph& graph, const ModuleFilter& filter) {
    std::vector<ModuleDetection> out;
    if (graph.vertices.empty()) return out;

    std::set<std::pair<int, int>> edge_set;
    for (const auto& [a, b] : graph.edges) {
        edge_set.insert({std::min(a, b), std::max(a, b)});
    }
    auto has_edge = [&](int a, int b) {
        return edge_set.count({std::min(a, b), std::max(a, b)}) > 0;
    };

    // neighbors along a vertical line, sorted by image y
    auto next_down = [&](int vid) -> int {
        const int vline = graph.vertex_lines[vid].second;
        int best = -1;
        double best_y = std::numeric_limits<double>::max();
        for (const auto& [a, b] : graph.edges) {
            int other = -1;
            if (a == vid && graph.vertex_lines[b].second == vline) other = b;
            if (b == vid && graph.vertex_lines[a].second == vline) other = a;
            if (other < 0) continue;
            const double y = graph.vertices[other].y();
            if (y > graph.vertices[vid].y() && y < best_y) {
                best_y = y;
                best = other;
            }
        }
        return best;
    };

    struct Cell {
        std::array<Vec2, 4> corners;
        int row_num, col_num;
    };
    std::vector<Cell> cells;

    // 4-cycles: a horizontal edge (A,B), the next vertices below A and B on
    // their vertical lines, and the closing edge between those
    for (const auto& [a, b] : graph.edges) {
        if (graph.vertex_lines[a].first != graph.vertex_lines[b].first) continue;  // vertical edge
        int left = a, right = b;
        if (graph.vertices[left].x() > graph.vertices[right].x()) std::swap(left, right);
        const int dl = next_down(left);
        const int dr = next_down(right);
        if (dl < 0 || dr < 0) continue;
        if (graph.vertex_lines[dl].first != graph.vertex_lines[dr].first) continue;
        if (!has_edge(dl, dr)) continue;

        Cell cell;
        cell.corners = {graph.vertices[left], graph.vertices[right], graph.vertices[dr],
                        graph.vertices[dl]};
        cell.row_num = graph.h_numbers[graph.vertex_lines[left].first];
        cell.col_num = graph.v_numbers[graph.vertex_lines[left].second];
        cells.push_back(cell);
    }

    // size, aspect and convexity filters
    std::vector<Cell> accepted;
    for (const auto& c : cells) {
        if (!convex_quad(c.corners)) continue;
        const double w_q = ((c.corners[1] - c.corners[0]).norm() +
                            (c.corners[2] - c.corners[3]).norm()) /
                           2.0;
        const double h_q = ((c.corners[3] - c.corners[0]).norm() +
                            (c.corners[2] - c.corners[1]).norm()) /
                           2.0;
        if (filter.expected_w > 0 &&
            std::abs(w_q - filter.expected_w) > filter.size_tol * filter.expected_w)
            continue;
        if (filter.expected_h > 0 &&
            std::abs(h_q - filter.expected_h) > filter.size_tol * filter.expected_h)
            continue;
        if (filter.expected_w > 0 && filter.expected_h > 0 && h_q > 0) {
            const double aspect = (w_q / h_q) / (filter.expected_w / filter.expected_h);
            if (aspect < filter.aspect_lo || aspect > filter.aspect_hi) continue;
        }
        accepted.push_back(c);
    }
    if (accepted.empty()) return out;

    int min_row = accepted.front().row_num, min_col = accepted.front().col_num;
    for (const auto& c : accepted) {
        min_row = std::min(min_row, c.row_num);
        min_col = std::min(min_col, c.col_num);
    }
    for (const auto& c : accepted) {
        ModuleDetection d;
        d.corners = c.corners;
        d.has_corners = true;
        d.row = c.row_num - min_row;
        d.seq = c.col_num - min_col;
        d.source = DetectionSource::edge;
        out.push_back(d);
    }
    std::sort(out.begin(), out.end(), [](const ModuleDetection& a, const ModuleDetection& b) {
        return std::tie(a.row, a.seq) < std::tie(b.row, b.seq);
    });
    return out;
}

}  // namespace pvloc
