#pragma once

#include <cmath>
#include <vector>

#include "partforge/common.hpp"
#include "partforge/geometry.hpp"
#include "partforge/image.hpp"

namespace partforge {

// Descriptor layout: gradient-orientation blocks, then a global color
// histogram. Crops are resampled to a 64x64 canonical window, gradients are
// pooled into 8x8-pixel cells with 9 unsigned orientation bins, and 2x2-cell
// blocks (stride one cell) are L2-normalized independently.
namespace feat {
constexpr int kCrop = 64;
constexpr int kCellSize = 8;
constexpr int kCells = kCrop / kCellSize;          // 8 per axis
constexpr int kBins = 9;
constexpr int kBlocks = kCells - 1;                // 7 per axis
constexpr int kGradientDims = kBlocks * kBlocks * 2 * 2 * kBins;
constexpr int kColorBinsPerChannel = 3;
constexpr int kColorDims = kColorBinsPerChannel * kColorBinsPerChannel * kColorBinsPerChannel;
constexpr int kDims = kGradientDims + kColorDims;
}  // namespace feat

using FeatureVector = std::vector<double>;

constexpr int feature_dimension() { return feat::kDims; }

// Orientation bin centers sit at k*pi/9, so a horizontal mirror (angle theta
// -> pi - theta) permutes bins exactly: k -> (9 - k) mod 9. The soft angular
// vote is linear in the angle, which keeps the permutation exact for
// in-between angles too.
inline FeatureVector extract_features(const Raster& r, const BBox& box) {
    require(box.valid() && box.area() > 0.0, errc::invalid_argument,
            "extract_features: degenerate box");
    require(box.x_min >= -1e-6 && box.y_min >= -1e-6 && box.x_max <= r.width + 1e-6 &&
                box.y_max <= r.height + 1e-6,
            errc::invalid_argument, "extract_features: box outside image");
    using namespace feat;
    const std::vector<double> crop = crop_resize_rgb(r, box, kCrop, kCrop);

    // Per-cell orientation histograms.
    std::vector<double> cells(static_cast<std::size_t>(kCells) * kCells * kBins, 0.0);
    constexpr double kPi = 3.141592653589793238462643383279502884;
    for (int y = 0; y < kCrop; ++y) {
        for (int x = 0; x < kCrop; ++x) {
            const int xm = std::max(x - 1, 0), xp = std::min(x + 1, kCrop - 1);
            const int ym = std::max(y - 1, 0), yp = std::min(y + 1, kCrop - 1);
            double dx = 0.0, dy = 0.0, mag2 = -1.0;
            for (int c = 0; c < 3; ++c) {
                const double gx = crop[(static_cast<std::size_t>(y) * kCrop + xp) * 3 + c] -
                                  crop[(static_cast<std::size_t>(y) * kCrop + xm) * 3 + c];
                const double gy = crop[(static_cast<std::size_t>(yp) * kCrop + x) * 3 + c] -
                                  crop[(static_cast<std::size_t>(ym) * kCrop + x) * 3 + c];
                const double m2 = gx * gx + gy * gy;
                if (m2 > mag2) {
                    mag2 = m2;
                    dx = gx;
                    dy = gy;
                }
            }
            if (mag2 <= 0.0) continue;
            const double mag = std::sqrt(mag2);
            double theta = std::atan2(dy, dx);
            if (theta < 0.0) theta += kPi;
            if (theta >= kPi) theta -= kPi;
            const double pos = theta / (kPi / kBins);
            const int k0 = std::min(static_cast<int>(pos), kBins - 1);
            const double frac = pos - k0;
            const int cell = (y / kCellSize) * kCells + (x / kCellSize);
            cells[static_cast<std::size_t>(cell) * kBins + k0] += (1.0 - frac) * mag;
            cells[static_cast<std::size_t>(cell) * kBins + (k0 + 1) % kBins] += frac * mag;
        }
    }

    FeatureVector out(static_cast<std::size_t>(kDims), 0.0);
    std::size_t idx = 0;
    for (int by = 0; by < kBlocks; ++by) {
        for (int bx = 0; bx < kBlocks; ++bx) {
            const std::size_t base = idx;
            double ss = 0.0;
            for (int cy = 0; cy < 2; ++cy) {
                for (int cx = 0; cx < 2; ++cx) {
                    const int cell = (by + cy) * kCells + (bx + cx);
                    for (int k = 0; k < kBins; ++k) {
                        const double v = cells[static_cast<std::size_t>(cell) * kBins + k];
                        out[idx++] = v;
                        ss += v * v;
                    }
                }
            }
            const double inv = 1.0 / std::sqrt(ss + 1e-12);
            for (std::size_t i = base; i < idx; ++i) out[i] *= inv;
        }
    }

    // Global color histogram, one vote per resampled pixel.
    for (int i = 0; i < kCrop * kCrop; ++i) {
        int bin = 0;
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(crop[static_cast<std::size_t>(i) * 3 + c], 0.0, 255.0);
            bin = bin * kColorBinsPerChannel +
                  std::min(kColorBinsPerChannel - 1,
                           static_cast<int>(v * kColorBinsPerChannel / 256.0));
        }
        out[static_cast<std::size_t>(kGradientDims + bin)] += 1.0;
    }
    for (int i = 0; i < kColorDims; ++i) {
        out[static_cast<std::size_t>(kGradientDims + i)] /= kCrop * kCrop;
    }
    return out;
}

}  // namespace partforge
