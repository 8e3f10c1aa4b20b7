#include "pvloc/lines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pvloc/image_ops.hpp"

namespace pvloc {

namespace {

double angle_mod_pi(double a) {
    a = std::fmod(a, kPi);
    if (a < 0) a += kPi;
    return a;
}

/// Circular distance between two angles that are periodic in pi.
double angle_dist_pi(double a, double b) {
    double d = std::abs(angle_mod_pi(a) - angle_mod_pi(b));
    return std::min(d, kPi - d);
}

}  // namespace

std::optional<ImageLine> make_line(double angle, double rho, int width, int height) {
    ImageLine l;
    l.angle = angle_mod_pi(angle);
    l.rho = rho;
    const Vec2 d = l.dir();
    const Vec2 n = l.normal();
    const Vec2 origin = n * rho;  // closest point to (0,0)

    const double xmax = width - 1.0, ymax = height - 1.0;
    std::vector<Vec2> hits;
    auto push_unique = [&](const Vec2& p) {
        for (const auto& q : hits)
            if ((q - p).norm() < 1e-9) return;
        hits.push_back(p);
    };
    if (std::abs(d.x()) > 1e-12) {  // intersect x = 0 and x = xmax
        for (const double xb : {0.0, xmax}) {
            const double t = (xb - origin.x()) / d.x();
            const double y = origin.y() + t * d.y();
            if (y >= -1e-9 && y <= ymax + 1e-9)
                push_unique({xb, std::clamp(y, 0.0, ymax)});
        }
    }
    if (std::abs(d.y()) > 1e-12) {
        for (const double yb : {0.0, ymax}) {
            const double t = (yb - origin.y()) / d.y();
            const double x = origin.x() + t * d.x();
            if (x >= -1e-9 && x <= xmax + 1e-9)
                push_unique({std::clamp(x, 0.0, xmax), yb});
        }
    }
    if (hits.size() < 2) return std::nullopt;
    // extreme pair along the direction
    double tmin = std::numeric_limits<double>::max(), tmax = -tmin;
    Vec2 pmin, pmax;
    for (const auto& p : hits) {
        const double t = p.dot(d);
        if (t < tmin) {
            tmin = t;
            pmin = p;
        }
        if (t > tmax) {
            tmax = t;
            pmax = p;
        }
    }
    l.p0 = pmin;
    l.p1 = pmax;
    return l;
}

std::vector<ImageLine> hough_lines(const ImageU8& edges, const HoughParams& params) {
    std::vector<ImageLine> out;
    if (params.rho_res <= 0 || params.theta_res_deg <= 0 ||
        params.weight_threshold_vertical <= 0)
        throw std::runtime_error("hough_lines: parameters must be positive");

    const int n_theta = std::max(1, static_cast<int>(std::lround(180.0 / params.theta_res_deg)));
    const double diag = std::hypot(edges.width, edges.height);
    const int n_rho = 2 * static_cast<int>(std::ceil(diag / params.rho_res)) + 1;
    const int rho_offset = n_rho / 2;

    std::vector<double> cos_t(n_theta), sin_t(n_theta);
    for (int t = 0; t < n_theta; ++t) {
        const double theta = deg2rad(t * params.theta_res_deg);
        cos_t[t] = std::cos(theta);
        sin_t[t] = std::sin(theta);
    }

    std::vector<int> acc(static_cast<size_t>(n_theta) * n_rho, 0);
    auto acc_at = [&](int t, int r) -> int& { return acc[static_cast<size_t>(t) * n_rho + r]; };

    for (int y = 0; y < edges.height; ++y)
        for (int x = 0; x < edges.width; ++x) {
            if (edges.at(x, y) == 0) continue;
            for (int t = 0; t < n_theta; ++t) {
                const double rho = x * cos_t[t] + y * sin_t[t];
                const int r = static_cast<int>(std::lround(rho / params.rho_res)) + rho_offset;
                if (r >= 0 && r < n_rho) ++acc_at(t, r);
            }
        }

    const double th_v = params.weight_threshold_vertical;
    const double th_h = th_v * params.weight_ratio_horizontal;
    const int floor_votes = static_cast<int>(std::floor(std::min(th_v, th_h)));
    if (floor_votes <= 0) return out;

    // dominant family angles from the per-theta vote profile
    std::vector<int> profile(n_theta, 0);
    for (int t = 0; t < n_theta; ++t)
        for (int r = 0; r < n_rho; ++r) profile[t] = std::max(profile[t], acc_at(t, r));
    int t1 = 0;
    for (int t = 0; t < n_theta; ++t)
        if (profile[t] > profile[t1]) t1 = t;
    int t2 = -1;
    for (int t = 0; t < n_theta; ++t) {
        const double sep = angle_dist_pi(deg2rad(t * params.theta_res_deg),
                                         deg2rad(t1 * params.theta_res_deg));
        if (sep < deg2rad(30.0)) continue;
        if (t2 < 0 || profile[t] > profile[t2]) t2 = t;
    }
    if (profile[t1] < floor_votes) return out;

    const double family_theta[2] = {deg2rad(t1 * params.theta_res_deg),
                                    t2 >= 0 ? deg2rad(t2 * params.theta_res_deg) : -10.0};
    // a line's direction is its normal angle + pi/2; the horizontal class is
    // the family whose direction lies closer to the image x-axis
    int horizontal_family = 0;
    {
        const double d0 = angle_dist_pi(family_theta[0] + kPi / 2, 0.0);
        const double d1 = t2 >= 0 ? angle_dist_pi(family_theta[1] + kPi / 2, 0.0) : kPi;
        horizontal_family = d0 <= d1 ? 0 : 1;
    }

    const double band = deg2rad(params.family_band_deg);
    for (int t = 0; t < n_theta; ++t) {
        for (int r = 0; r < n_rho; ++r) {
            const int votes = acc_at(t, r);
            if (votes < floor_votes) continue;
            // 3x3 local maximum (ties resolved toward smaller indices)
            bool is_peak = true;
            for (int dt = -1; dt <= 1 && is_peak; ++dt)
                for (int dr = -1; dr <= 1 && is_peak; ++dr) {
                    if (dt == 0 && dr == 0) continue;
                    const int nt = t + dt, nr = r + dr;
                    if (nt < 0 || nt >= n_theta || nr < 0 || nr >= n_rho) continue;
                    const int nv = acc_at(nt, nr);
                    if (nv > votes || (nv == votes && (dt < 0 || (dt == 0 && dr < 0))))
                        is_peak = false;
                }
            if (!is_peak) continue;

            const double theta = deg2rad(t * params.theta_res_deg);
            int fam = -1;
            if (angle_dist_pi(theta, family_theta[0]) <= band)
                fam = 0;
            else if (t2 >= 0 && angle_dist_pi(theta, family_theta[1]) <= band)
                fam = 1;
            if (fam < 0) continue;
            const bool horizontal = fam == horizontal_family;
            if (votes < (horizontal ? th_h : th_v)) continue;

            auto line = make_line(theta + kPi / 2, (r - rho_offset) * params.rho_res,
                                  edges.width, edges.height);
            if (!line) continue;
            line->weight = votes;
            line->family = horizontal ? 0 : 1;
            out.push_back(*line);
        }
    }
    return out;
}

std::vector<ImageLine> detect_lines(const ImageU8& image, const DetectLinesParams& params) {
    const CannyResult canny = canny_edges(image, params.canny_low, params.canny_high);
    return hough_lines(canny.edges, params.hough);
}

double point_line_distance(const Vec2& p, const ImageLine& l) {
    const Vec2 d = l.p1 - l.p0;
    const double len = d.norm();
    if (len < 1e-12) throw std::runtime_error("degenerate line (identical border points)");
    return std::abs((d.x() * (p.y() - l.p0.y()) - d.y() * (p.x() - l.p0.x())) / len);
}

double hausdorff_line_distance(const ImageLine& a, const ImageLine& b) {
    return std::max(std::max(point_line_distance(a.p0, b), point_line_distance(a.p1, b)),
                    std::max(point_line_distance(b.p0, a), point_line_distance(b.p1, a)));
}

namespace {

/// Vector mean of member lines: directions averaged with doubled angles (so
/// near-180-degree wrap cancels), offsets averaged along the mean normal.
ImageLine cluster_representative(const std::vector<ImageLine>& members, int width, int height) {
    double sx = 0.0, sy = 0.0;
    for (const auto& m : members) {
        sx += std::cos(2.0 * m.angle);
        sy += std::sin(2.0 * m.angle);
    }
    const double mean_angle = angle_mod_pi(0.5 * std::atan2(sy, sx));
    const Vec2 n(-std::sin(mean_angle), std::cos(mean_angle));
    double rho = 0.0, weight = 0.0;
    for (const auto& m : members) {
        rho += n.dot((m.p0 + m.p1) / 2.0);
        weight += m.weight;
    }
    rho /= static_cast<double>(members.size());
    auto rep = make_line(mean_angle, rho, width, height);
    ImageLine out = rep ? *rep : members.front();
    if (!rep) {
        out.angle = mean_angle;
        out.rho = rho;
    }
    out.weight = weight;
    int votes0 = 0, votes1 = 0;
    for (const auto& m : members) (m.family == 1 ? votes1 : votes0)++;
    out.family = votes1 > votes0 ? 1 : 0;
    return out;
}

}  // namespace

std::vector<LineCluster> cluster_lines(const std::vector<ImageLine>& lines, double stop_threshold,
                                       int width, int height) {
    if (stop_threshold <= 0) throw std::runtime_error("cluster_lines: threshold must be positive");
    const int n = static_cast<int>(lines.size());
    std::vector<std::vector<int>> groups(n);
    for (int i = 0; i < n; ++i) groups[i] = {i};

    // single-linkage distance matrix, updated as min on merge
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            dist[i][j] = dist[j][i] = hausdorff_line_distance(lines[i], lines[j]);

    std::vector<bool> alive(n, true);
    int alive_count = n;
    while (alive_count > 1) {
        double best = std::numeric_limits<double>::max();
        int bi = -1, bj = -1;
        for (int i = 0; i < n; ++i) {
            if (!alive[i]) continue;
            for (int j = i + 1; j < n; ++j) {
                if (!alive[j]) continue;
                if (dist[i][j] < best) {
                    best = dist[i][j];
                    bi = i;
                    bj = j;
                }
            }
        }
        if (best >= stop_threshold) break;
        groups[bi].insert(groups[bi].end(), groups[bj].begin(), groups[bj].end());
        alive[bj] = false;
        --alive_count;
        for (int m = 0; m < n; ++m)
            if (alive[m] && m != bi) dist[bi][m] = dist[m][bi] = std::min(dist[bi][m], dist[bj][m]);
    }

    std::vector<LineCluster> out;
    for (int i = 0; i < n; ++i) {
        if (!alive[i]) continue;
        LineCluster c;
        std::sort(groups[i].begin(), groups[i].end());
        for (const int idx : groups[i]) c.members.push_back(lines[idx]);
        c.representative = cluster_representative(c.members, width, height);
        out.push_back(std::move(c));
    }
    // deterministic order: by family then offset
    std::sort(out.begin(), out.end(), [](const LineCluster& a, const LineCluster& b) {
        if (a.representative.family != b.representative.family)
            return a.representative.family < b.representative.family;
        return a.representative.rho < b.representative.rho;
    });
    return out;
}

namespace {

/// Great-circle normal of an image line on the unit sphere centered at the
/// camera (image plane placed at the focal distance).
Vec3 great_circle_normal(const ImageLine& l, const CameraIntrinsics& k) {
    const Eigen::Vector3d a(l.p0.x(), l.p0.y(), 1.0);
    const Eigen::Vector3d b(l.p1.x(), l.p1.y(), 1.0);
    const Eigen::Vector3d line_h = a.cross(b);
    Mat3 km;
    km << k.fx, 0, k.cx, 0, k.fy, k.cy, 0, 0, 1;
    Vec3 m = km.transpose() * line_h;
    const double norm = m.norm();
    return norm > 0 ? Vec3(m / norm) : Vec3::UnitZ();
}

Vec3 smallest_eigenvector(const Mat3& m) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(m);
    return eig.eigenvectors().col(0);
}

}  // namespace

std::optional<PerpendicularFilterResult> filter_perpendicular(
    const std::vector<LineCluster>& clusters, const CameraIntrinsics& k, double angle_tol_rad,
    double perp_tol_rad) {
    if (clusters.size() < 2) return std::nullopt;

    std::vector<Vec3> normals(clusters.size());
    std::vector<int> family(clusters.size());
    for (size_t i = 0; i < clusters.size(); ++i) {
        normals[i] = great_circle_normal(clusters[i].representative, k);
        int f = clusters[i].representative.family;
        if (f < 0) {
            // fall back to the image-angle convention: directions within 45
            // degrees of the x-axis are the horizontal class
            const double d = angle_dist_pi(clusters[i].representative.angle, 0.0);
            f = d <= kPi / 4 ? 0 : 1;
        }
        family[i] = f;
    }

    Vec3 vp[2];
    for (int f = 0; f < 2; ++f) {
        Mat3 acc = Mat3::Zero();
        int count = 0;
        for (size_t i = 0; i < clusters.size(); ++i) {
            if (family[i] != f) continue;
            acc += normals[i] * normals[i].transpose();
            ++count;
        }
        if (count < 2) return std::nullopt;  // family estimation failure
        vp[f] = smallest_eigenvector(acc);
    }

    const double sin_tol = std::sin(angle_tol_rad);
    // membership pass, then one re-estimation from the members
    for (int pass = 0; pass < 2; ++pass) {
        Mat3 acc[2] = {Mat3::Zero(), Mat3::Zero()};
        int count[2] = {0, 0};
        for (size_t i = 0; i < clusters.size(); ++i) {
            const double d0 = std::abs(normals[i].dot(vp[0]));
            const double d1 = std::abs(normals[i].dot(vp[1]));
            if (d0 <= sin_tol && d0 <= d1) {
                family[i] = 0;
                acc[0] += normals[i] * normals[i].transpose();
                ++count[0];
            } else if (d1 <= sin_tol) {
                family[i] = 1;
                acc[1] += normals[i] * normals[i].transpose();
                ++count[1];
            } else {
                family[i] = -1;
            }
        }
        if (count[0] < 2 || count[1] < 2) return std::nullopt;
        if (pass == 0) {
            vp[0] = smallest_eigenvector(acc[0]);
            vp[1] = smallest_eigenvector(acc[1]);
        }
    }

    if (std::abs(vp[0].dot(vp[1])) > std::sin(perp_tol_rad)) return std::nullopt;

    PerpendicularFilterResult out;
    out.vanishing_a = vp[0];
    out.vanishing_b = vp[1];
    for (size_t i = 0; i < clusters.size(); ++i) {
        if (family[i] < 0) continue;
        LineCluster c = clusters[i];
        c.representative.family = family[i];
        for (auto& m : c.members) m.family = family[i];
        out.clusters.push_back(std::move(c));
    }
    return out;
}

}  // namespace pvloc
