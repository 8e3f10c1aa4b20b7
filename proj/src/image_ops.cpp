#include "pvloc/image_ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace pvloc {

double intensity_variance(const ImageU8& img) {
    if (img.data.empty()) return 0.0;
    double sum = 0.0, sum_sq = 0.0;
    for (const auto v : img.data) {
        sum += v;
        sum_sq += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(img.data.size());
    const double mean = sum / n;
    return std::max(0.0, sum_sq / n - mean * mean);
}

ImageU8 gaussian_blur(const ImageU8& img, int kernel_size) {
    if (kernel_size <= 1) return img;
    if (kernel_size % 2 == 0) ++kernel_size;
    const int half = kernel_size / 2;
    const double sigma = 0.3 * (half - 1) + 0.8;  // kernel-size heuristic
    std::vector<double> kern(kernel_size);
    double ksum = 0.0;
    for (int i = 0; i < kernel_size; ++i) {
        const double d = i - half;
        kern[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        ksum += kern[i];
    }
    for (auto& v : kern) v /= ksum;

    ImageF32 tmp(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = -half; i <= half; ++i) {
                const int sx = std::clamp(x + i, 0, img.width - 1);
                acc += kern[i + half] * img.at(sx, y);
            }
            tmp.at(x, y) = static_cast<float>(acc);
        }
    ImageU8 out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = -half; i <= half; ++i) {
                const int sy = std::clamp(y + i, 0, img.height - 1);
                acc += kern[i + half] * tmp.at(x, sy);
            }
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0l, 255l));
        }
    return out;
}

AdaptiveBlurResult adaptive_blur(const ImageU8& img, double target_focus, int max_kernel) {
    if (target_focus <= 0.0) throw std::runtime_error("adaptive_blur: target must be positive");
    AdaptiveBlurResult out;
    if (intensity_variance(img) <= 0.0) {
        out.image = img;
        out.kernel_size = 1;
        out.degenerate = true;
        return out;
    }
    for (int ks = 1; ks <= max_kernel; ks += 2) {
        ImageU8 blurred = ks == 1 ? img : gaussian_blur(img, ks);
        if (intensity_variance(blurred) <= target_focus || ks == max_kernel) {
            out.image = std::move(blurred);
            out.kernel_size = ks;
            return out;
        }
    }
    out.image = img;
    return out;
}

GradientField sobel_gradients(const ImageU8& img) {
    GradientField g;
    g.gx = ImageF32(img.width, img.height);
    g.gy = ImageF32(img.width, img.height);
    g.magnitude = ImageF32(img.width, img.height);
    auto px = [&](int x, int y) {
        x = std::clamp(x, 0, img.width - 1);
        y = std::clamp(y, 0, img.height - 1);
        return static_cast<double>(img.at(x, y));
    };
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
            const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
            g.gx.at(x, y) = static_cast<float>(gx);
            g.gy.at(x, y) = static_cast<float>(gy);
            g.magnitude.at(x, y) = static_cast<float>(std::hypot(gx, gy));
        }
    return g;
}

double otsu_threshold(const ImageF32& values) {
    float vmax = 0.f;
    for (const auto v : values.data) vmax = std::max(vmax, v);
    if (vmax <= 0.f) return 0.0;
    constexpr int kBins = 256;
    std::array<long, kBins> hist{};
    const double scale = (kBins - 1) / static_cast<double>(vmax);
    long total = 0;
    for (const auto v : values.data) {
        if (v <= 0.f) continue;  // zero-gradient pixels excluded from the histogram
        const int b = std::min(kBins - 1, static_cast<int>(v * scale));
        ++hist[b];
        ++total;
    }
    if (total == 0) return 0.0;
    double sum_all = 0.0;
    for (int b = 0; b < kBins; ++b) sum_all += static_cast<double>(b) * hist[b];
    double w0 = 0.0, sum0 = 0.0, best_var = -1.0;
    int best_bin = 0;
    for (int b = 0; b < kBins; ++b) {
        w0 += hist[b];
        if (w0 == 0) continue;
        const double w1 = total - w0;
        if (w1 == 0) break;
        sum0 += static_cast<double>(b) * hist[b];
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (var > best_var) {
            best_var = var;
            best_bin = b;
        }
    }
    return best_bin / scale;
}

CannyResult canny_edges(const ImageU8& img, double low, double high) {
    CannyResult out;
    out.edges = ImageU8(img.width, img.height, 0);
    const GradientField g = sobel_gradients(img);
    if (high <= 0.0) {
        high = otsu_threshold(g.magnitude);
        low = 0.4 * high;
    } else if (low <= 0.0) {
        low = 0.4 * high;
    }
    out.low = low;
    out.high = high;
    if (high <= 0.0) return out;

    // non-maximum suppression along the quantized gradient direction
    ImageU8 status(img.width, img.height, 0);  // 1 weak, 2 strong
    for (int y = 1; y < img.height - 1; ++y)
        for (int x = 1; x < img.width - 1; ++x) {
            const double m = g.magnitude.at(x, y);
            if (m < low) continue;
            const double gx = g.gx.at(x, y), gy = g.gy.at(x, y);
            double m1, m2;
            const double ax = std::abs(gx), ay = std::abs(gy);
            if (ax >= ay * 2.4142) {  // within 22.5 deg of horizontal gradient
                m1 = g.magnitude.at(x - 1, y);
                m2 = g.magnitude.at(x + 1, y);
            } else if (ay >= ax * 2.4142) {
                m1 = g.magnitude.at(x, y - 1);
                m2 = g.magnitude.at(x, y + 1);
            } else if (gx * gy > 0) {
                m1 = g.magnitude.at(x - 1, y - 1);
                m2 = g.magnitude.at(x + 1, y + 1);
            } else {
                m1 = g.magnitude.at(x - 1, y + 1);
                m2 = g.magnitude.at(x + 1, y - 1);
            }
            if (m >= m1 && m >= m2) status.at(x, y) = m >= high ? 2 : 1;
        }

    // hysteresis: grow strong edges into connected weak ones
    std::vector<std::pair<int, int>> stack;
    for (int y = 1; y < img.height - 1; ++y)
        for (int x = 1; x < img.width - 1; ++x)
            if (status.at(x, y) == 2 && out.edges.at(x, y) == 0) {
                stack.emplace_back(x, y);
                out.edges.at(x, y) = 255;
                while (!stack.empty()) {
                    const auto [cx, cy] = stack.back();
                    stack.pop_back();
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int nx = cx + dx, ny = cy + dy;
                            if (nx < 1 || ny < 1 || nx >= img.width - 1 || ny >= img.height - 1)
                                continue;
                            if (status.at(nx, ny) >= 1 && out.edges.at(nx, ny) == 0) {
                                out.edges.at(nx, ny) = 255;
                                stack.emplace_back(nx, ny);
                            }
                        }
                }
            }
    return out;
}

std::vector<Component> connected_components(const ImageU8& binary, std::vector<int>& labels) {
    labels.assign(binary.data.size(), 0);
    std::vector<Component> comps;
    std::vector<std::pair<int, int>> stack;
    int next = 0;
    for (int y = 0; y < binary.height; ++y)
        for (int x = 0; x < binary.width; ++x) {
            const size_t idx = static_cast<size_t>(y) * binary.width + x;
            if (binary.data[idx] == 0 || labels[idx] != 0) continue;
            ++next;
            Component comp;
            comp.label = next;
            double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
            stack.emplace_back(x, y);
            labels[idx] = next;
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                ++comp.area;
                sx += cx;
                sy += cy;
                sxx += static_cast<double>(cx) * cx;
                sxy += static_cast<double>(cx) * cy;
                syy += static_cast<double>(cy) * cy;
                constexpr int dx4[] = {1, -1, 0, 0};
                constexpr int dy4[] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    const int nx = cx + dx4[d], ny = cy + dy4[d];
                    if (!binary.in_bounds(nx, ny)) continue;
                    const size_t nidx = static_cast<size_t>(ny) * binary.width + nx;
                    if (binary.data[nidx] != 0 && labels[nidx] == 0) {
                        labels[nidx] = next;
                        stack.emplace_back(nx, ny);
                    }
                }
            }
            const double n = comp.area;
            comp.centroid = Vec2(sx / n, sy / n);
            const double cxx = sxx / n - comp.centroid.x() * comp.centroid.x();
            const double cxy = sxy / n - comp.centroid.x() * comp.centroid.y();
            const double cyy = syy / n - comp.centroid.y() * comp.centroid.y();
            Eigen::Matrix2d cov;
            cov << cxx, cxy, cxy, cyy;
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
            comp.axis = eig.eigenvectors().col(1);  // largest eigenvalue
            comp.minor_extent = std::sqrt(std::max(0.0, eig.eigenvalues()[0]));
            comps.push_back(comp);
        }
    return comps;
}

ImageU8 apply_mask(const ImageU8& edges, const ImageU8& mask) {
    if (edges.width != mask.width || edges.height != mask.height)
        throw std::runtime_error("apply_mask: dimension mismatch");

    std::vector<int> labels;
    const std::vector<Component> comps = connected_components(mask, labels);
    if (comps.empty()) return ImageU8(edges.width, edges.height, 0);

    const Component* largest = &comps.front();
    for (const auto& c : comps)
        if (c.area > largest->area) largest = &c;

    // keep the largest component and any component near its middle axis
    const Vec2 n(-largest->axis.y(), largest->axis.x());
    const double band = std::max(2.0 * largest->minor_extent, 2.0);
    std::vector<bool> keep(comps.size() + 1, false);
    for (size_t i = 0; i < comps.size(); ++i) {
        const double d = std::abs((comps[i].centroid - largest->centroid).dot(n));
        keep[comps[i].label] = (comps[i].label == largest->label) || d <= band;
    }

    ImageU8 out = edges;
    for (size_t i = 0; i < out.data.size(); ++i)
        if (!keep[labels[i]]) out.data[i] = 0;
    return out;
}

}  // namespace pvloc
