#include "pvloc/edge_detector.hpp"

#include <algorithm>
#include <cmath>

#include "pvloc/image_ops.hpp"

namespace pvloc {

ImageU8 undistort(const ImageU8& image, const CameraIntrinsics& k) {
    if (!k.dist.any()) return image;
    ImageU8 out(image.width, image.height);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            const Vec2 src = distort_pixel(Vec2(x, y), k);
            out.at(x, y) = static_cast<std::uint8_t>(
                std::clamp(std::lround(image.sample(src.x(), src.y())), 0l, 255l));
        }
    return out;
}

EdgeDetectionResult detect_modules_edge(const ImageU8& image, const CameraIntrinsics& k,
                                        const EdgeDetectorParams& params, const ImageU8* mask) {
    EdgeDetectionResult out;
    out.structure.source = DetectionSource::edge;

    double scale = 1.0;
    ImageU8 working = resize_to_max_dim(image, params.max_dimension, &scale);
    const CameraIntrinsics ks = scale != 1.0 ? k.scaled(scale) : k;
    working = undistort(working, ks);

    if (params.target_focus > 0) {
        AdaptiveBlurResult blur = adaptive_blur(working, params.target_focus);
        out.blur_kernel = blur.kernel_size;
        working = std::move(blur.image);
    }

    CannyResult canny = canny_edges(working, params.canny_low, params.canny_high);

    if (mask) {
        double mask_scale = 1.0;
        ImageU8 m = resize_to_max_dim(*mask, params.max_dimension, &mask_scale);
        m = undistort(m, ks);
        for (auto& px : m.data) px = px >= 128 ? 255 : 0;
        canny.edges = apply_mask(canny.edges, m);
    }

    const std::vector<ImageLine> lines = hough_lines(canny.edges, params.hough);
    out.n_lines = static_cast<int>(lines.size());
    if (lines.size() < 4) {
        out.no_structure = true;
        return out;
    }

    const double short_side = std::min(params.filter.expected_w, params.filter.expected_h) * scale;
    const double stop = std::max(2.0, params.cluster_stop_fraction * short_side);
    const std::vector<LineCluster> clusters =
        cluster_lines(lines, stop, working.width, working.height);
    out.n_clusters = static_cast<int>(clusters.size());

    const auto filtered =
        filter_perpendicular(clusters, ks, deg2rad(params.angle_tol_deg));
    if (!filtered) {
        out.no_structure = true;
        return out;
    }

    const GridGraph graph = build_grid_graph(filtered->clusters, working.width, working.height);

    ModuleFilter f = params.filter;
    f.expected_w *= scale;
    f.expected_h *= scale;
    std::vector<ModuleDetection> detections = extract_modules(graph, f);
    if (detections.empty()) {
        out.no_structure = true;
        return out;
    }

    // back to original pixel coordinates
    double w_sum = 0.0, h_sum = 0.0;
    for (auto& d : detections) {
        for (auto& c : d.corners) c /= scale;
        w_sum += ((d.corners[1] - d.corners[0]).norm() + (d.corners[2] - d.corners[3]).norm()) / 2;
        h_sum += ((d.corners[3] - d.corners[0]).norm() + (d.corners[2] - d.corners[1]).norm()) / 2;
    }
    out.structure.detections = std::move(detections);
    out.structure.rep_width = w_sum / static_cast<double>(out.structure.detections.size());
    out.structure.rep_height = h_sum / static_cast<double>(out.structure.detections.size());

    // row lines from the horizontal family representatives that support cells
    for (const auto& c : filtered->clusters) {
        if (c.representative.family != 0) continue;
        RowLine rl;
        rl.point = c.representative.p0 / scale;
        rl.dir = c.representative.dir();
        out.structure.rows.push_back(rl);
    }
    out.structure.valid = true;
    return out;
}

}  // namespace pvloc
