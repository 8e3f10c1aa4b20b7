#include "pvloc/optical_flow.hpp"

#include <cmath>
#include <stdexcept>

namespace pvloc {

namespace {

ImageU8 half_scale(const ImageU8& img) {
    const int w = std::max(1, img.width / 2);
    const int h = std::max(1, img.height / 2);
    ImageU8 out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int x0 = 2 * x, y0 = 2 * y;
            const int x1 = std::min(x0 + 1, img.width - 1);
            const int y1 = std::min(y0 + 1, img.height - 1);
            out.at(x, y) = static_cast<std::uint8_t>(
                (img.at(x0, y0) + img.at(x1, y0) + img.at(x0, y1) + img.at(x1, y1) + 2) / 4);
        }
    return out;
}

}  // namespace

std::vector<FlowResult> estimate_flow(const ImageU8& prev, const ImageU8& cur,
                                      const std::vector<Vec2>& points, const FlowParams& params) {
    if (prev.width != cur.width || prev.height != cur.height)
        throw std::runtime_error("estimate_flow: image dimension mismatch");

    std::vector<ImageU8> pyr_prev{prev}, pyr_cur{cur};
    for (int l = 1; l < params.levels; ++l) {
        if (pyr_prev.back().width < 2 * params.window_half + 4) break;
        pyr_prev.push_back(half_scale(pyr_prev.back()));
        pyr_cur.push_back(half_scale(pyr_cur.back()));
    }
    const int top = static_cast<int>(pyr_prev.size()) - 1;

    std::vector<FlowResult> out(points.size());
    for (size_t pi = 0; pi < points.size(); ++pi) {
        Vec2 d = Vec2::Zero();
        bool valid = true;
        double min_eig_seen = 0.0;

        for (int level = top; level >= 0; --level) {
            const ImageU8& a = pyr_prev[level];
            const ImageU8& b = pyr_cur[level];
            const double s = 1.0 / static_cast<double>(1 << level);
            const Vec2 p = points[pi] * s;
            if (level != top) d *= 2.0;

            const int wh = params.window_half;
            if (p.x() < wh + 1 || p.y() < wh + 1 || p.x() > a.width - wh - 2 ||
                p.y() > a.height - wh - 2) {
                if (level == 0) valid = false;
                continue;
            }

            // spatial gradient matrix of the template window
            double gxx = 0, gxy = 0, gyy = 0;
            std::vector<double> ix((2 * wh + 1) * (2 * wh + 1));
            std::vector<double> iy(ix.size());
            std::vector<double> tv(ix.size());
            int idx = 0;
            for (int dy = -wh; dy <= wh; ++dy)
                for (int dx = -wh; dx <= wh; ++dx, ++idx) {
                    const double x = p.x() + dx, y = p.y() + dy;
                    const double gx = (a.sample(x + 1, y) - a.sample(x - 1, y)) / 2.0;
                    const double gy = (a.sample(x, y + 1) - a.sample(x, y - 1)) / 2.0;
                    ix[idx] = gx;
                    iy[idx] = gy;
                    tv[idx] = a.sample(x, y);
                    gxx += gx * gx;
                    gxy += gx * gy;
                    gyy += gy * gy;
                }
            const double n = static_cast<double>(ix.size());
            const double tr = gxx + gyy;
            const double det = gxx * gyy - gxy * gxy;
            const double min_eig = (tr - std::sqrt(std::max(0.0, tr * tr - 4 * det))) / 2.0 / n;
            min_eig_seen = min_eig;
            if (min_eig < params.min_eigen) {
                if (level == 0) valid = false;
                continue;
            }

            for (int it = 0; it < params.iterations; ++it) {
                double bx = 0, by = 0;
                idx = 0;
                const Vec2 q = p + d;
                if (q.x() < wh + 1 || q.y() < wh + 1 || q.x() > b.width - wh - 2 ||
                    q.y() > b.height - wh - 2)
                    break;
                for (int dy = -wh; dy <= wh; ++dy)
                    for (int dx = -wh; dx <= wh; ++dx, ++idx) {
                        const double diff =
                            b.sample(q.x() + dx, q.y() + dy) - tv[static_cast<size_t>(idx)];
                        bx += diff * ix[static_cast<size_t>(idx)];
                        by += diff * iy[static_cast<size_t>(idx)];
                    }
                const double ux = (gyy * -bx - (-gxy) * -by) / det;
                const double uy = (gxx * -by - (-gxy) * -bx) / det;
                d += Vec2(ux, uy);
                if (std::hypot(ux, uy) < 0.01) break;
            }
        }

        const Vec2 target = points[pi] + d;
        if (target.x() < 0 || target.y() < 0 || target.x() > cur.width - 1 ||
            target.y() > cur.height - 1)
            valid = false;
        (void)min_eig_seen;
        out[pi].displacement = d;
        out[pi].valid = valid;
    }
    return out;
}

}  // namespace pvloc
