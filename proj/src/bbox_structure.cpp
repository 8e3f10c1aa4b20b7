#include "pvloc/bbox_structure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pvloc/rng.hpp"

namespace pvloc {

using nlohmann::json;

DetectionFrames load_detections(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open detections file: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("detections parse error: ") + e.what());
    }
    DetectionFrames out;
    for (const auto& jf : j.at("frames")) {
        out.indices.push_back(jf.value("index", static_cast<long>(out.frames.size())));
        std::vector<OrientedBBox> boxes;
        for (const auto& jb : jf.value("boxes", json::array())) {
            if (jb.size() < 5) throw std::runtime_error("detections: box needs 5+ entries");
            OrientedBBox b;
            b.xc = jb[0].get<double>();
            b.yc = jb[1].get<double>();
            b.w = jb[2].get<double>();
            b.h = jb[3].get<double>();
            b.angle = jb[4].get<double>();
            b.confidence = jb.size() > 5 ? jb[5].get<double>() : 1.0;
            if (b.w < 0 || b.h < 0) throw std::runtime_error("detections: negative box dimension");
            b.canonicalize();
            boxes.push_back(b);
        }
        for (const auto& jc : jf.value("contours", json::array())) {
            std::vector<Vec2> contour;
            for (const auto& jp : jc) contour.emplace_back(jp[0].get<double>(), jp[1].get<double>());
            boxes.push_back(min_bounding_rect(contour));
        }
        out.frames.push_back(std::move(boxes));
    }
    return out;
}

namespace {

/// Andrew monotone chain; returns hull in counter-clockwise order.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Vec2& a, const Vec2& b) { return (a - b).norm() < 1e-12; }),
              pts.end());
    const auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
        return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
    };
    const size_t n = pts.size();
    if (n < 3) return pts;
    std::vector<Vec2> hull(2 * n);
    size_t k = 0;
    for (size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    const size_t lower = k + 1;
    for (size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

}  // namespace

OrientedBBox min_bounding_rect(const std::vector<Vec2>& contour) {
    const std::vector<Vec2> hull = convex_hull(contour);
    if (hull.size() < 3) throw std::runtime_error("min_bounding_rect: collinear input");

    OrientedBBox best;
    double best_area = std::numeric_limits<double>::max();
    for (size_t e = 0; e < hull.size(); ++e) {
        const Vec2 edge = hull[(e + 1) % hull.size()] - hull[e];
        const double len = edge.norm();
        if (len < 1e-12) continue;
        const Vec2 d = edge / len;
        const Vec2 n(-d.y(), d.x());
        double dmin = 1e300, dmax = -1e300, nmin = 1e300, nmax = -1e300;
        for (const auto& p : hull) {
            dmin = std::min(dmin, p.dot(d));
            dmax = std::max(dmax, p.dot(d));
            nmin = std::min(nmin, p.dot(n));
            nmax = std::max(nmax, p.dot(n));
        }
        const double area = (dmax - dmin) * (nmax - nmin);
        if (area < best_area - 1e-12) {
            best_area = area;
            const Vec2 c = d * ((dmin + dmax) / 2.0) + n * ((nmin + nmax) / 2.0);
            best.xc = c.x();
            best.yc = c.y();
            best.w = dmax - dmin;
            best.h = nmax - nmin;
            best.angle = std::atan2(d.y(), d.x());
        }
    }
    best.canonicalize();
    return best;
}

namespace {

double polygon_area(const std::vector<Vec2>& poly) {
    double a = 0.0;
    for (size_t i = 0; i < poly.size(); ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % poly.size()];
        a += p.x() * q.y() - q.x() * p.y();
    }
    return std::abs(a) / 2.0;
}

/// Sutherland-Hodgman clip of `subject` by convex `clip`.
std::vector<Vec2> clip_polygon(std::vector<Vec2> subject, const std::array<Vec2, 4>& clip) {
    for (int e = 0; e < 4; ++e) {
        const Vec2 a = clip[e];
        const Vec2 b = clip[(e + 1) % 4];
        const Vec2 dir = b - a;
        auto inside = [&](const Vec2& p) {
            return dir.x() * (p.y() - a.y()) - dir.y() * (p.x() - a.x()) >= -1e-12;
        };
        auto intersect = [&](const Vec2& p, const Vec2& q) {
            const Vec2 pq = q - p;
            const double denom = dir.x() * pq.y() - dir.y() * pq.x();
            const double t = denom != 0.0
                                 ? (dir.x() * (a.y() - p.y()) - dir.y() * (a.x() - p.x())) / denom
                                 : 0.0;
            return Vec2(p + pq * t);
        };
        std::vector<Vec2> out;
        for (size_t i = 0; i < subject.size(); ++i) {
            const Vec2& cur = subject[i];
            const Vec2& prev = subject[(i + subject.size() - 1) % subject.size()];
            if (inside(cur)) {
                if (!inside(prev)) out.push_back(intersect(prev, cur));
                out.push_back(cur);
            } else if (inside(prev)) {
                out.push_back(intersect(prev, cur));
            }
        }
        subject = std::move(out);
        if (subject.empty()) break;
    }
    return subject;
}

}  // namespace

double oriented_iou(const OrientedBBox& a, const OrientedBBox& b) {
    const auto ca = a.corners();
    const auto cb = b.corners();
    std::vector<Vec2> subject(ca.begin(), ca.end());
    const std::vector<Vec2> inter = clip_polygon(subject, cb);
    if (inter.size() < 3) return 0.0;
    const double ai = polygon_area(inter);
    const double u = a.area() + b.area() - ai;
    return u > 0 ? ai / u : 0.0;
}

BoxFilterResult filter_boxes(const std::vector<OrientedBBox>& boxes, int image_width,
                             int image_height, const BoxFilterParams& params) {
    BoxFilterResult out;
    std::vector<OrientedBBox> kept;

    // boxes on the image edge are incomplete modules
    for (const auto& b : boxes) {
        bool on_border = false;
        for (const auto& c : b.corners()) {
            if (c.x() <= params.border_margin || c.x() >= image_width - 1 - params.border_margin ||
                c.y() <= params.border_margin || c.y() >= image_height - 1 - params.border_margin) {
                on_border = true;
                break;
            }
        }
        if (!on_border) kept.push_back(b);
    }

    // overlapping pairs keep the higher-confidence box
    std::vector<bool> dead(kept.size(), false);
    for (size_t i = 0; i < kept.size(); ++i) {
        if (dead[i]) continue;
        for (size_t j = i + 1; j < kept.size(); ++j) {
            if (dead[j]) continue;
            if (oriented_iou(kept[i], kept[j]) > params.iou_threshold) {
                if (kept[j].confidence > kept[i].confidence) {
                    dead[i] = true;
                    break;
                }
                dead[j] = true;
            }
        }
    }
    std::vector<OrientedBBox> survivors;
    for (size_t i = 0; i < kept.size(); ++i)
        if (!dead[i]) survivors.push_back(kept[i]);

    // representative at the 75th percentile by area, then divergence filter;
    // iterated to a fixpoint so the operation is idempotent
    while (!survivors.empty()) {
        std::vector<size_t> idx(survivors.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            return survivors[a].area() < survivors[b].area();
        });
        const size_t rank = static_cast<size_t>(std::floor(0.75 * (survivors.size() - 1)));
        const OrientedBBox& rep = survivors[idx[rank]];
        out.rep_width = rep.w;
        out.rep_height = rep.h;

        std::vector<OrientedBBox> next;
        for (const auto& b : survivors) {
            if (std::abs(b.w - rep.w) > params.size_divergence * rep.w) continue;
            if (std::abs(b.h - rep.h) > params.size_divergence * rep.h) continue;
            if (params.expected_dims) {
                if (std::abs(b.w - params.expected_dims->x()) >
                        params.size_divergence * params.expected_dims->x() ||
                    std::abs(b.h - params.expected_dims->y()) >
                        params.size_divergence * params.expected_dims->y())
                    continue;
            }
            next.push_back(b);
        }
        if (next.size() == survivors.size()) break;
        survivors = std::move(next);
    }
    out.boxes = std::move(survivors);
    return out;
}

namespace {

double point_to_line(const Vec2& p, const Vec2& a, const Vec2& d) {
    return std::abs(d.x() * (p.y() - a.y()) - d.y() * (p.x() - a.x()));
}

}  // namespace

RowFit fit_rows(const std::vector<Vec2>& centers, double rep_height, const RowFitParams& params) {
    if (centers.size() < 2) throw std::runtime_error("fit_rows: need at least two centers");
    const double threshold = params.residual_fraction * rep_height;

    RowFit out;
    out.assignments.assign(centers.size(), -1);
    std::vector<size_t> remaining(centers.size());
    for (size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;

    Rng rng(params.seed);
    struct FittedLine {
        Vec2 point, dir;
        std::vector<int> members;
    };
    std::vector<FittedLine> lines;

    while (remaining.size() >= 2) {
        std::vector<size_t> best_inliers;
        for (int it = 0; it < params.ransac_iterations; ++it) {
            const size_t i = remaining[rng.index(remaining.size())];
            const size_t j = remaining[rng.index(remaining.size())];
            if (i == j) continue;
            const Vec2 d = centers[j] - centers[i];
            const double len = d.norm();
            if (len < 1e-9) continue;
            const Vec2 dir = d / len;
            std::vector<size_t> inliers;
            for (const size_t m : remaining)
                if (point_to_line(centers[m], centers[i], dir) <= threshold) inliers.push_back(m);
            if (inliers.size() > best_inliers.size()) best_inliers = std::move(inliers);
        }
        if (best_inliers.size() < 2) break;

        // total least squares refit over the inliers
        Vec2 mean = Vec2::Zero();
        for (const size_t m : best_inliers) mean += centers[m];
        mean /= static_cast<double>(best_inliers.size());
        Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
        for (const size_t m : best_inliers) {
            const Vec2 d = centers[m] - mean;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
        Vec2 dir = eig.eigenvectors().col(1);
        if (dir.x() < 0) dir = -dir;  // canonical: along +x

        FittedLine line;
        line.point = mean;
        line.dir = dir;
        for (const size_t m : best_inliers) line.members.push_back(static_cast<int>(m));
        lines.push_back(std::move(line));

        std::vector<size_t> next;
        for (const size_t m : remaining)
            if (std::find(best_inliers.begin(), best_inliers.end(), m) == best_inliers.end())
                next.push_back(m);
        remaining = std::move(next);
    }
    if (lines.empty()) throw std::runtime_error("fit_rows: no line with >= 2 inliers");

    // parallelism check against the membership-weighted mean direction
    double sx = 0.0, sy = 0.0;
    for (const auto& l : lines) {
        const double a = std::atan2(l.dir.y(), l.dir.x());
        sx += l.members.size() * std::cos(2 * a);
        sy += l.members.size() * std::sin(2 * a);
    }
    const double mean_angle = 0.5 * std::atan2(sy, sx);
    const double tol = deg2rad(params.parallel_tol_deg);
    std::vector<FittedLine> parallel;
    for (const auto& l : lines) {
        double d = std::abs(std::atan2(l.dir.y(), l.dir.x()) - mean_angle);
        d = std::min(d, kPi - d);
        if (d <= tol) parallel.push_back(l);
    }
    if (parallel.empty()) throw std::runtime_error("fit_rows: parallelism check removed all rows");

    // order rows top to bottom along the common normal
    const Vec2 n(-std::sin(mean_angle), std::cos(mean_angle));
    std::sort(parallel.begin(), parallel.end(), [&](const FittedLine& a, const FittedLine& b) {
        return a.point.dot(n) < b.point.dot(n);
    });
    for (size_t r = 0; r < parallel.size(); ++r) {
        RowLine row;
        row.point = parallel[r].point;
        row.dir = parallel[r].dir;
        row.members = parallel[r].members;
        for (const int m : parallel[r].members) out.assignments[m] = static_cast<int>(r);
        out.rows.push_back(std::move(row));
    }
    return out;
}

SemanticStructure assign_sequence(const std::vector<OrientedBBox>& boxes, const RowFit& fit,
                                  double rep_width, double rep_height,
                                  int flight_direction_sign) {
    SemanticStructure s;
    s.source = DetectionSource::bbox;
    s.rep_width = rep_width;
    s.rep_height = rep_height;
    s.rows = fit.rows;

    const double sign = flight_direction_sign >= 0 ? 1.0 : -1.0;

    struct RowEntry {
        int box_index;
        double proj;
    };
    std::vector<std::vector<RowEntry>> per_row(fit.rows.size());
    for (size_t i = 0; i < boxes.size(); ++i) {
        const int r = fit.assignments[i];
        if (r < 0) continue;
        const double proj = sign * Vec2(boxes[i].xc, boxes[i].yc).dot(fit.rows[r].dir);
        per_row[r].push_back({static_cast<int>(i), proj});
    }
    for (auto& row : per_row)
        std::sort(row.begin(), row.end(),
                  [](const RowEntry& a, const RowEntry& b) { return a.proj < b.proj; });

    // pooled median spacing aligns sequence origins across rows
    std::vector<double> spacings;
    for (const auto& row : per_row)
        for (size_t i = 0; i + 1 < row.size(); ++i) spacings.push_back(row[i + 1].proj - row[i].proj);
    double med = 0.0;
    if (!spacings.empty()) {
        std::sort(spacings.begin(), spacings.end());
        med = spacings[spacings.size() / 2];
    }

    double min_start = std::numeric_limits<double>::max();
    for (const auto& row : per_row)
        if (!row.empty()) min_start = std::min(min_start, row.front().proj);

    for (size_t r = 0; r < per_row.size(); ++r) {
        const auto& row = per_row[r];
        if (row.empty()) continue;
        int pos = 0;
        if (med > 1e-9)
            pos = static_cast<int>(std::lround((row.front().proj - min_start) / med));
        for (size_t i = 0; i < row.size(); ++i) {
            if (i > 0) {
                const double spacing = row[i].proj - row[i - 1].proj;
                int step = 1;
                if (med > 1e-9 && spacing > 1.5 * med)
                    step = std::max(1, static_cast<int>(std::lround(spacing / med)));
                pos += step;
            }
            ModuleDetection d;
            d.box = boxes[row[i].box_index];
            d.has_corners = false;
            d.row = static_cast<int>(r);
            d.seq = pos;
            d.source = DetectionSource::bbox;
            s.detections.push_back(d);
        }
    }
    s.valid = !s.detections.empty();
    return s;
}

SemanticStructure detect_modules_bbox(const std::vector<OrientedBBox>& raw_boxes, int image_width,
                                      int image_height, const BoxFilterParams& box_params,
                                      const RowFitParams& row_params,
                                      int flight_direction_sign) {
    SemanticStructure invalid;
    invalid.source = DetectionSource::bbox;
    const BoxFilterResult filtered = filter_boxes(raw_boxes, image_width, image_height, box_params);
    if (filtered.boxes.size() < 2) return invalid;
    std::vector<Vec2> centers;
    for (const auto& b : filtered.boxes) centers.emplace_back(b.xc, b.yc);
    RowFit fit;
    try {
        fit = fit_rows(centers, filtered.rep_height, row_params);
    } catch (const std::runtime_error&) {
        return invalid;  // degenerate frame: no structure
    }
    return assign_sequence(filtered.boxes, fit, filtered.rep_width, filtered.rep_height,
                           flight_direction_sign);
}

}  // namespace pvloc
