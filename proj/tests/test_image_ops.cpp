#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pvloc/image_ops.hpp"
#include "pvloc/rng.hpp"

using namespace pvloc;

namespace {

ImageU8 noisy_rectangle_image(int w, int h, double noise_sigma, std::uint64_t seed) {
    ImageU8 img(w, h, 120);
    for (int y = h / 4; y < 3 * h / 4; ++y)
        for (int x = w / 4; x < 3 * w / 4; ++x) img.at(x, y) = 30;
    if (noise_sigma > 0) {
        Rng rng(seed);
        for (auto& px : img.data)
            px = static_cast<std::uint8_t>(
                std::clamp(px + rng.gaussian(0, noise_sigma), 0.0, 255.0));
    }
    return img;
}

}  // namespace

TEST_CASE("adaptive blur: image already below target keeps kernel 1") {
    ImageU8 img(64, 64, 100);
    img.at(10, 10) = 110;  // tiny variance
    const double var = intensity_variance(img);
    const AdaptiveBlurResult r = adaptive_blur(img, var + 1.0);
    CHECK(r.kernel_size == 1);
    CHECK(r.image.data == img.data);
    CHECK_FALSE(r.degenerate);
}

TEST_CASE("adaptive blur: uniform image reports the degenerate flag") {
    ImageU8 img(32, 32, 77);
    const AdaptiveBlurResult r = adaptive_blur(img, 10.0);
    CHECK(r.kernel_size == 1);
    CHECK(r.degenerate);
}

TEST_CASE("adaptive blur reduces the focus measure to the target") {
    const ImageU8 img = noisy_rectangle_image(128, 128, 20.0, 3);
    const double var0 = intensity_variance(img);
    const double target = var0 * 0.6;
    const AdaptiveBlurResult r = adaptive_blur(img, target);
    CHECK(r.kernel_size > 1);
    CHECK(intensity_variance(r.image) <= target);
}

TEST_CASE("adaptive blur kernel is monotone in the target") {
    const ImageU8 img = noisy_rectangle_image(128, 128, 20.0, 4);
    const double var0 = intensity_variance(img);
    int prev_kernel = 1000;
    for (const double frac : {0.5, 0.6, 0.7, 0.8, 0.9}) {
        const AdaptiveBlurResult r = adaptive_blur(img, var0 * frac);
        CHECK(r.kernel_size <= prev_kernel);  // larger target never larger kernel
        prev_kernel = r.kernel_size;
    }
    CHECK_THROWS_AS(adaptive_blur(img, 0.0), std::runtime_error);
}

TEST_CASE("canny finds the rectangle boundary and nothing on blank images") {
    const ImageU8 img = noisy_rectangle_image(128, 128, 0.0, 0);
    const CannyResult r = canny_edges(img);
    CHECK(r.high > r.low);
    int edge_count = 0;
    for (const auto v : r.edges.data) edge_count += v != 0;
    // boundary of a 64x64 rectangle is about 4*64 pixels
    CHECK(edge_count > 150);
    CHECK(edge_count < 800);

    const ImageU8 blank(128, 128, 50);
    const CannyResult rb = canny_edges(blank);
    int blank_count = 0;
    for (const auto v : rb.edges.data) blank_count += v != 0;
    CHECK(blank_count == 0);
}

TEST_CASE("canny edge pixels sit within 1.5 px of the true rectangle boundary") {
    const ImageU8 img = noisy_rectangle_image(128, 128, 0.0, 0);
    const CannyResult r = canny_edges(img);
    const double x0 = 32, x1 = 95, y0 = 32, y1 = 95;  // filled region bounds
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) {
            if (r.edges.at(x, y) == 0) continue;
            const double dx = std::min(std::abs(x - x0), std::abs(x - x1));
            const double dy = std::min(std::abs(y - y0), std::abs(y - y1));
            CHECK(std::min(dx, dy) <= 1.5);
        }
}

TEST_CASE("apply_mask: all-ones mask is the identity") {
    const ImageU8 img = noisy_rectangle_image(64, 64, 0.0, 0);
    const CannyResult r = canny_edges(img);
    const ImageU8 mask(64, 64, 255);
    const ImageU8 out = apply_mask(r.edges, mask);
    CHECK(out.data == r.edges.data);
}

TEST_CASE("apply_mask zeroes edges outside the selected band") {
    ImageU8 edges(64, 64, 255);  // every pixel an edge
    ImageU8 mask(64, 64, 0);
    for (int y = 28; y < 36; ++y)  // center horizontal band
        for (int x = 0; x < 64; ++x) mask.at(x, y) = 255;
    const ImageU8 out = apply_mask(edges, mask);
    int outside = 0, inside = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            if (y >= 28 && y < 36)
                inside += out.at(x, y) != 0;
            else
                outside += out.at(x, y) != 0;
        }
    CHECK(outside == 0);
    CHECK(inside == 8 * 64);
}

TEST_CASE("apply_mask keeps components near the largest component's axis") {
    ImageU8 edges(100, 100, 255);
    ImageU8 mask(100, 100, 0);
    // largest component: wide band through the middle
    for (int y = 45; y < 55; ++y)
        for (int x = 5; x < 95; ++x) mask.at(x, y) = 255;
    // small component on the same axis (kept)
    for (int y = 47; y < 52; ++y)
        for (int x = 0; x < 3; ++x) mask.at(x, y) = 255;
    // component far off axis (dropped)
    for (int y = 5; y < 15; ++y)
        for (int x = 20; x < 60; ++x) mask.at(x, y) = 255;
    const ImageU8 out = apply_mask(edges, mask);
    CHECK(out.at(1, 48) != 0);    // near-axis satellite kept
    CHECK(out.at(30, 10) == 0);   // off-axis band dropped
    CHECK(out.at(50, 50) != 0);   // largest kept
    CHECK_THROWS_AS(apply_mask(edges, ImageU8(10, 10, 0)), std::runtime_error);
}

TEST_CASE("connected components report area and centroid") {
    ImageU8 img(32, 32, 0);
    for (int y = 2; y < 6; ++y)
        for (int x = 2; x < 8; ++x) img.at(x, y) = 255;
    for (int y = 20; y < 22; ++y)
        for (int x = 20; x < 22; ++x) img.at(x, y) = 255;
    std::vector<int> labels;
    const auto comps = connected_components(img, labels);
    REQUIRE(comps.size() == 2);
    CHECK(comps[0].area == 24);
    CHECK(comps[0].centroid.x() == doctest::Approx(4.5));
    CHECK(comps[1].area == 4);
}

TEST_CASE("otsu threshold separates a bimodal field") {
    ImageF32 f(64, 64, 0.f);
    for (int i = 0; i < 64 * 64 / 2; ++i) f.data[i] = 10.0f;
    for (int i = 64 * 64 / 2; i < 64 * 64; ++i) f.data[i] = 200.0f;
    const double th = otsu_threshold(f);
    CHECK(th > 10.0);
    CHECK(th < 200.0);
}
