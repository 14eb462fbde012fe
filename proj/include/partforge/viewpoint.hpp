#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "partforge/classifier.hpp"
#include "partforge/common.hpp"
#include "partforge/features.hpp"
#include "partforge/image.hpp"

namespace partforge {

enum class Viewpoint : int { front = 0, back = 1, left = 2, right = 3 };

inline constexpr int kViewpointCount = 4;

inline const char* viewpoint_name(Viewpoint v) {
    switch (v) {
        case Viewpoint::front: return "front";
        case Viewpoint::back: return "back";
        case Viewpoint::left: return "left";
        case Viewpoint::right: return "right";
    }
    raise(errc::invalid_argument, "viewpoint_name: bad value");
}

inline Viewpoint viewpoint_from_name(std::string_view name) {
    for (int i = 0; i < kViewpointCount; ++i) {
        const auto v = static_cast<Viewpoint>(i);
        if (name == viewpoint_name(v)) return v;
    }
    raise(errc::invalid_argument, "viewpoint_from_name: unknown viewpoint");
}

// 4-way softmax over whole-crop features.
struct ViewpointClassifier {
    PartClassifier model;
};

struct SideSplit {
    std::vector<int> left;   // indices into the input image list
    std::vector<int> right;
};

namespace detail {

// Gradient block of the feature vector only; color carries no facing signal.
inline std::vector<double> orientation_signature(const Raster& r) {
    const FeatureVector f = extract_features(r, r.full_box());
    return std::vector<double>(f.begin(), f.begin() + feat::kGradientDims);
}

inline double dist2(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += sq(a[i] - b[i]);
    return s;
}

// Gradient mass in the left half minus the right half (middle column of an
// odd-width image excluded). Mirroring negates it exactly, so the two halves
// of a mirror-forced split take opposite signs.
inline double horizontal_asymmetry(const Raster& r) {
    double left = 0.0, right = 0.0;
    const int w = r.width;
    const int h = r.height;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double mag = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double gx = static_cast<double>(r.at(std::min(x + 1, w - 1), y, c)) -
                                  r.at(std::max(x - 1, 0), y, c);
                const double gy = static_cast<double>(r.at(x, std::min(y + 1, h - 1), c)) -
                                  r.at(x, std::max(y - 1, 0), c);
                mag += std::abs(gx) + std::abs(gy);
            }
            if (x < w / 2) left += mag;
            if (x >= (w + 1) / 2) right += mag;
        }
    }
    const double total = left + right;
    return total > 0.0 ? (left - right) / total : 0.0;
}

}  // namespace detail

// Mirror-augmented 2-means over gradient-orientation signatures. Each image
// and its mirror are assigned jointly to opposite clusters, whichever pairing
// costs less, so a mirror pair can never collapse into one cluster. Seeded by
// the mirror pair with the largest self-distance, which is the strongest
// facing-direction axis in the set; no randomness, so reruns are identical.
inline SideSplit split_side_views(const std::vector<const Raster*>& images) {
    require(images.size() >= 2, errc::invalid_argument, "split_side_views: need >= 2 images");
    const std::size_t n = images.size();
    std::vector<std::vector<double>> orig(n), mirr(n);
    for (std::size_t i = 0; i < n; ++i) {
        require(images[i] != nullptr, errc::invalid_argument, "split_side_views: null image");
        orig[i] = detail::orientation_signature(*images[i]);
        mirr[i] = detail::orientation_signature(mirror_horizontal(*images[i]));
    }

    std::size_t seed = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = detail::dist2(orig[i], mirr[i]);
        if (d > best) {
            best = d;
            seed = i;
        }
    }
    std::vector<double> c0 = orig[seed];
    std::vector<double> c1 = mirr[seed];

    std::vector<int> side(n, 0);  // 0: original joins c0; 1: original joins c1
    for (int iter = 0; iter < 50; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const double keep = detail::dist2(orig[i], c0) + detail::dist2(mirr[i], c1);
            const double swap = detail::dist2(orig[i], c1) + detail::dist2(mirr[i], c0);
            const int s = swap < keep ? 1 : 0;
            if (s != side[i]) {
                side[i] = s;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;
        std::vector<double> m0(orig[0].size(), 0.0), m1(orig[0].size(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& to0 = side[i] == 0 ? orig[i] : mirr[i];
            const auto& to1 = side[i] == 0 ? mirr[i] : orig[i];
            for (std::size_t d = 0; d < m0.size(); ++d) {
                m0[d] += to0[d];
                m1[d] += to1[d];
            }
        }
        for (std::size_t d = 0; d < m0.size(); ++d) {
            m0[d] /= static_cast<double>(n);
            m1[d] /= static_cast<double>(n);
        }
        c0 = std::move(m0);
        c1 = std::move(m1);
    }

    // Cluster naming: the side whose originals carry more left-half gradient
    // mass is called "left". Downstream models are symmetric in the label, so
    // only consistency matters.
    double asym0 = 0.0, asym1 = 0.0;
    int n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = detail::horizontal_asymmetry(*images[i]);
        if (side[i] == 0) {
            asym0 += a;
            ++n0;
        } else {
            asym1 += a;
            ++n1;
        }
    }
    if (n0 > 0) asym0 /= n0;
    if (n1 > 0) asym1 /= n1;
    const int left_side = asym1 > asym0 ? 1 : 0;

    SideSplit out;
    for (std::size_t i = 0; i < n; ++i) {
        (side[i] == left_side ? out.left : out.right).push_back(static_cast<int>(i));
    }
    return out;
}

inline ViewpointClassifier train_viewpoint_classifier(
    const std::array<std::vector<const Raster*>, kViewpointCount>& sets,
    const TrainConfig& cfg = {}, TrainLog* log = nullptr) {
    std::vector<LabeledSample> samples;
    for (int j = 0; j < kViewpointCount; ++j) {
        require(!sets[static_cast<std::size_t>(j)].empty(), errc::invalid_argument,
                "train_viewpoint_classifier: empty viewpoint set");
        for (const Raster* r : sets[static_cast<std::size_t>(j)]) {
            require(r != nullptr, errc::invalid_argument,
                    "train_viewpoint_classifier: null image");
            samples.push_back({extract_features(*r, r->full_box()), j});
        }
    }
    return ViewpointClassifier{train_classifier(samples, cfg, log)};
}

// Argmax over the 4-way softmax; the first maximal class wins, so exact ties
// resolve in enum order.
inline std::pair<Viewpoint, std::vector<double>> predict_viewpoint_features(
    const ViewpointClassifier& v, const FeatureVector& features) {
    require(v.model.class_count == kViewpointCount, errc::invalid_state,
            "predict_viewpoint: classifier is not 4-way");
    std::vector<double> probs = score(v.model, features);
    int best = 0;
    for (int i = 1; i < kViewpointCount; ++i) {
        if (probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) best = i;
    }
    return {static_cast<Viewpoint>(best), std::move(probs)};
}

inline std::pair<Viewpoint, std::vector<double>> predict_viewpoint(const ViewpointClassifier& v,
                                                                   const Raster& r,
                                                                   const BBox& box) {
    return predict_viewpoint_features(v, extract_features(r, box));
}

}  // namespace partforge
