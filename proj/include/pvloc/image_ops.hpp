#pragma once
/**
 * @file image_ops.hpp
 * @brief Image-processing primitives for the edge detector: gaussian blur with
 * focus-driven kernel adaptation, Sobel gradients, Otsu thresholding, Canny
 * edges and connected components.
 */

#include <cstdint>
#include <vector>

#include "pvloc/geometry.hpp"
#include "pvloc/image.hpp"

namespace pvloc {

/// Intensity variance over the whole image (the focus measure).
double intensity_variance(const ImageU8& img);

/// Gaussian blur with an odd kernel size; sigma derived from the size.
ImageU8 gaussian_blur(const ImageU8& img, int kernel_size);

struct AdaptiveBlurResult {
    ImageU8 image;
    int kernel_size = 1;
    bool degenerate = false;  // input variance already zero
};

/// Grows the kernel (1, 3, 5, ...) until the focus measure drops to the target.
/// Throws on target_focus <= 0.
AdaptiveBlurResult adaptive_blur(const ImageU8& img, double target_focus,
                                 int max_kernel = 31);

struct GradientField {
    ImageF32 gx, gy, magnitude;
};

GradientField sobel_gradients(const ImageU8& img);

/// Otsu threshold over the positive values of a float field (256-bin histogram).
double otsu_threshold(const ImageF32& values);

struct CannyResult {
    ImageU8 edges;        // 255 = edge
    double low = 0.0;     // applied thresholds on gradient magnitude
    double high = 0.0;
};

/// Canny with non-maximum suppression and hysteresis. Thresholds <= 0 select
/// automatic mode: high = Otsu of the gradient magnitude, low = 0.4 * high.
CannyResult canny_edges(const ImageU8& img, double low = 0.0, double high = 0.0);

/// Zeroes edge pixels outside the selected mask area. The selection is the
/// largest connected component plus components lying near its middle axis.
/// Throws on dimension mismatch.
ImageU8 apply_mask(const ImageU8& edges, const ImageU8& mask);

struct Component {
    int label = 0;
    int area = 0;
    Vec2 centroid = Vec2::Zero();
    Vec2 axis = Vec2::UnitX();   // principal (elongation) direction
    double minor_extent = 0.0;   // std dev along the minor axis
};

/// 4-connected components of nonzero pixels; labels start at 1 in `labels`.
std::vector<Component> connected_components(const ImageU8& binary, std::vector<int>& labels);

}  // namespace pvloc
