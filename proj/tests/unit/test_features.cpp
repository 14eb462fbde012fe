#include <catch2/catch_amalgamated.hpp>

#include "partforge/features.hpp"

using namespace partforge;

namespace {

Raster random_raster(Rng& rng, int w, int h) {
    Raster r;
    r.width = w;
    r.height = h;
    r.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (auto& p : r.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
    return r;
}

// Feature index of one gradient entry, mirroring the documented layout.
std::size_t grad_index(int by, int bx, int cy, int cx, int k) {
    return static_cast<std::size_t>((((by * feat::kBlocks + bx) * 2 + cy) * 2 + cx) * feat::kBins +
                                    k);
}

}  // namespace

TEST_CASE("feature length matches the documented constant") {
    REQUIRE(feature_dimension() == 7 * 7 * 2 * 2 * 9 + 27);
    Rng rng(71);
    const Raster r = random_raster(rng, 30, 20);
    const FeatureVector f = extract_features(r, r.full_box());
    REQUIRE(static_cast<int>(f.size()) == feature_dimension());
    for (const double v : f) REQUIRE(std::isfinite(v));
}

TEST_CASE("uniform crop has zero gradients and a one-hot color histogram") {
    Raster r;
    r.width = r.height = 16;
    r.pixels.assign(16 * 16 * 3, 120);
    const FeatureVector f = extract_features(r, r.full_box());
    for (int i = 0; i < feat::kGradientDims; ++i) REQUIRE(f[static_cast<std::size_t>(i)] == 0.0);
    // 120 falls in the middle bin of each channel: index 1*9 + 1*3 + 1.
    double color_sum = 0.0;
    for (int i = 0; i < feat::kColorDims; ++i) {
        const double v = f[static_cast<std::size_t>(feat::kGradientDims + i)];
        color_sum += v;
        if (i == 13) {
            REQUIRE(v == 1.0);
        } else {
            REQUIRE(v == 0.0);
        }
    }
    REQUIRE(color_sum == 1.0);
}

TEST_CASE("color histogram block always sums to one") {
    Rng rng(72);
    for (int trial = 0; trial < 10; ++trial) {
        const Raster r = random_raster(rng, 40, 40);
        BBox box{rng.uniform(0, 10), rng.uniform(0, 10), 0, 0};
        box.x_max = box.x_min + rng.uniform(5, 30);
        box.y_max = box.y_min + rng.uniform(5, 30);
        const FeatureVector f = extract_features(r, box);
        double s = 0.0;
        for (int i = 0; i < feat::kColorDims; ++i) {
            s += f[static_cast<std::size_t>(feat::kGradientDims + i)];
        }
        REQUIRE(s == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("horizontal mirror permutes gradient bins analytically") {
    Rng rng(73);
    // 64x64 source so the canonical resample is an exact pixel pull and the
    // mirrored image produces exactly negated horizontal gradients.
    const Raster r = random_raster(rng, feat::kCrop, feat::kCrop);
    const Raster m = mirror_horizontal(r);
    const FeatureVector f = extract_features(r, r.full_box());
    const FeatureVector g = extract_features(m, m.full_box());

    for (int by = 0; by < feat::kBlocks; ++by) {
        for (int bx = 0; bx < feat::kBlocks; ++bx) {
            for (int cy = 0; cy < 2; ++cy) {
                for (int cx = 0; cx < 2; ++cx) {
                    for (int k = 0; k < feat::kBins; ++k) {
                        const std::size_t src = grad_index(by, bx, cy, cx, k);
                        const std::size_t dst = grad_index(by, feat::kBlocks - 1 - bx, cy, 1 - cx,
                                                           (feat::kBins - k) % feat::kBins);
                        REQUIRE(g[dst] == Catch::Approx(f[src]).margin(1e-9));
                    }
                }
            }
        }
    }
    // Color histogram is mirror-invariant.
    for (int i = 0; i < feat::kColorDims; ++i) {
        const std::size_t idx = static_cast<std::size_t>(feat::kGradientDims + i);
        REQUIRE(g[idx] == Catch::Approx(f[idx]).margin(1e-12));
    }
}

TEST_CASE("degenerate or out-of-image boxes are rejected") {
    Rng rng(74);
    const Raster r = random_raster(rng, 20, 20);
    REQUIRE_THROWS_AS(extract_features(r, BBox{5, 5, 5, 10}), error);
    REQUIRE_THROWS_AS(extract_features(r, BBox{10, 10, 5, 5}), error);
    REQUIRE_THROWS_AS(extract_features(r, BBox{-3, 0, 10, 10}), error);
    REQUIRE_THROWS_AS(extract_features(r, BBox{0, 0, 25, 10}), error);
}

TEST_CASE("feature extraction is deterministic") {
    Rng rng(75);
    const Raster r = random_raster(rng, 33, 47);
    const BBox box{3.5, 2.25, 30.0, 41.75};
    const FeatureVector a = extract_features(r, box);
    const FeatureVector b = extract_features(r, box);
    REQUIRE(a == b);
}
