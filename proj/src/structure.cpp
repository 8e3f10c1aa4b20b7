#include "pvloc/structure.hpp"

#include <algorithm>

namespace pvloc {

void OrientedBBox::canonicalize() {
    if (h > w) {
        std::swap(w, h);
        angle += kPi / 2.0;
    }
    angle = std::fmod(angle, kPi);
    if (angle < 0) angle += kPi;
}

std::array<Vec2, 4> OrientedBBox::corners() const {
    const double ca = std::cos(angle), sa = std::sin(angle);
    const Vec2 u(ca, sa), v(-sa, ca);
    const Vec2 c(xc, yc);
    return {c - u * (w / 2) - v * (h / 2), c + u * (w / 2) - v * (h / 2),
            c + u * (w / 2) + v * (h / 2), c - u * (w / 2) + v * (h / 2)};
}

Vec2 ModuleDetection::center() const {
    if (has_corners) return (corners[0] + corners[1] + corners[2] + corners[3]) / 4.0;
    return box.center();
}

std::vector<const ModuleDetection*> SemanticStructure::row_detections(int row) const {
    std::vector<const ModuleDetection*> out;
    for (const auto& d : detections)
        if (d.row == row) out.push_back(&d);
    std::sort(out.begin(), out.end(),
              [](const ModuleDetection* a, const ModuleDetection* b) { return a->seq < b->seq; });
    return out;
}

int SemanticStructure::row_count() const {
    int n = 0;
    for (const auto& d : detections) n = std::max(n, d.row + 1);
    return n;
}

}  // namespace pvloc
