#pragma once

#include <cmath>
#include <vector>

#include "partforge/common.hpp"
#include "partforge/geometry.hpp"
#include "partforge/gmm.hpp"
#include "partforge/image.hpp"
#include "partforge/maxflow.hpp"
#include "partforge/proposals.hpp"

namespace partforge {

// Per-pixel probability that a pixel belongs to the object, derived from how
// many proposals cover it.
struct ForegroundPrior {
    int width = 0;
    int height = 0;
    std::vector<double> prob;  // row-major, in [0,1]

    double at(int x, int y) const { return prob[static_cast<std::size_t>(y) * width + x]; }
};

using ColorMixture = Gmm;

struct SegEnergyConfig {
    double alpha = 8.0;            // pairwise weight
    double beta_contrast = 1.0;    // scales the per-image contrast coefficient
    double epsilon_log = 1e-6;     // floor inside logarithms
    int gmm_components = 5;
    int max_iterations = 10;
    double min_component_area_fraction = 0.01;

    void validate() const {
        require(alpha >= 0.0, errc::invalid_argument, "SegEnergyConfig: alpha");
        require(epsilon_log > 0.0, errc::invalid_argument, "SegEnergyConfig: epsilon_log");
        require(gmm_components >= 1, errc::invalid_argument, "SegEnergyConfig: gmm_components");
        require(max_iterations >= 1, errc::invalid_argument, "SegEnergyConfig: max_iterations");
    }
};

struct Segmentation {
    int width = 0;
    int height = 0;
    std::vector<int> labels;  // 1 = object
    double energy = 0.0;

    int label(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

inline ForegroundPrior proposal_prior(const ProposalSet& proposals, const Size& image_size) {
    require(!proposals.boxes.empty(), errc::invalid_argument, "proposal_prior: no proposals");
    const int w = static_cast<int>(image_size.width);
    const int h = static_cast<int>(image_size.height);
    require(w > 0 && h > 0, errc::invalid_argument, "proposal_prior: bad image size");
    ForegroundPrior prior;
    prior.width = w;
    prior.height = h;
    prior.prob.assign(static_cast<std::size_t>(w) * h, 0.0);
    for (const auto& b : proposals.boxes) {
        // A pixel is covered when its center lies in the box.
        const int x0 = std::clamp(static_cast<int>(std::ceil(b.x_min - 0.5)), 0, w);
        const int y0 = std::clamp(static_cast<int>(std::ceil(b.y_min - 0.5)), 0, h);
        const int x1 = std::clamp(static_cast<int>(std::ceil(b.x_max - 0.5)), 0, w);
        const int y1 = std::clamp(static_cast<int>(std::ceil(b.y_max - 0.5)), 0, h);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                prior.prob[static_cast<std::size_t>(y) * w + x] += 1.0;
            }
        }
    }
    const double total = static_cast<double>(proposals.boxes.size());
    for (auto& p : prior.prob) p /= total;
    return prior;
}

inline Vec3 pixel_color(const Raster& r, int x, int y) {
    return Vec3{r.at(x, y, 0) / 255.0, r.at(x, y, 1) / 255.0, r.at(x, y, 2) / 255.0};
}

inline ColorMixture fit_color_mixture(const std::vector<Vec3>& pixels, int k, Rng& rng) {
    require(k >= 1, errc::invalid_argument, "fit_color_mixture: k");
    GmmConfig cfg;
    cfg.components = k;
    cfg.max_iterations = 8;
    return Gmm::fit(pixels, cfg, rng);
}

namespace detail {

// Contrast coefficient: reciprocal of twice the mean squared color difference
// over 4-neighbor pairs. Zero for a perfectly uniform image.
inline double contrast_beta(const Raster& r) {
    double sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            const Vec3 c = pixel_color(r, x, y);
            if (x + 1 < r.width) {
                sum += (c - pixel_color(r, x + 1, y)).norm2();
                ++count;
            }
            if (y + 1 < r.height) {
                sum += (c - pixel_color(r, x, y + 1)).norm2();
                ++count;
            }
        }
    }
    if (count == 0 || sum <= 0.0) return 0.0;
    return 1.0 / (2.0 * sum / static_cast<double>(count));
}

inline void check_dims(const Raster& r, const ForegroundPrior& prior) {
    require(prior.width == r.width && prior.height == r.height, errc::invalid_argument,
            "prior dimensions do not match the raster");
}

}  // namespace detail

// Total labeling cost: prior term -log(M+eps), appearance term -log p(color),
// and a contrast-weighted penalty on 4-neighbor label disagreements.
inline double energy(const Raster& r, const Segmentation& seg, const ForegroundPrior& prior,
                     const ColorMixture& fg, const ColorMixture& bg, const SegEnergyConfig& cfg) {
    cfg.validate();
    detail::check_dims(r, prior);
    require(seg.width == r.width && seg.height == r.height &&
                seg.labels.size() == static_cast<std::size_t>(r.width) * r.height,
            errc::invalid_argument, "energy: segmentation dimensions");
    const double beta = detail::contrast_beta(r) * cfg.beta_contrast;
    double total = 0.0;
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            const int l = seg.label(x, y);
            const double m = prior.at(x, y);
            total += -std::log((l ? m : 1.0 - m) + cfg.epsilon_log);
            const Vec3 c = pixel_color(r, x, y);
            total += -(l ? fg : bg).log_density(c);
            if (x + 1 < r.width && l != seg.label(x + 1, y)) {
                total += cfg.alpha * std::exp(-beta * (c - pixel_color(r, x + 1, y)).norm2());
            }
            if (y + 1 < r.height && l != seg.label(x, y + 1)) {
                total += cfg.alpha * std::exp(-beta * (c - pixel_color(r, x, y + 1)).norm2());
            }
        }
    }
    return total;
}

// Alternates between refitting the two color mixtures on the current label
// split and re-solving the labeling by minimum cut. A refitted mixture is kept
// only if it does not worsen its side's total appearance cost, so the reported
// energy sequence never increases.
inline Segmentation grabcut_iterate(const Raster& r, const ForegroundPrior& prior,
                                    const SegEnergyConfig& cfg,
                                    std::vector<double>* energy_trace = nullptr) {
    cfg.validate();
    detail::check_dims(r, prior);
    const int w = r.width, h = r.height, n = w * h;

    Segmentation seg;
    seg.width = w;
    seg.height = h;
    seg.labels.assign(static_cast<std::size_t>(n), 0);
    // Strict majority: a pixel covered by exactly half the proposals (the
    // typical background level when the background region's own box spans the
    // frame) starts as background.
    for (int i = 0; i < n; ++i) {
        seg.labels[static_cast<std::size_t>(i)] =
            prior.prob[static_cast<std::size_t>(i)] > 0.5 ? 1 : 0;
    }

    const auto count_fg = [&] {
        int c = 0;
        for (const int l : seg.labels) c += l;
        return c;
    };

    std::vector<Vec3> colors(static_cast<std::size_t>(n));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) colors[static_cast<std::size_t>(y * w + x)] = pixel_color(r, x, y);
    }

    // One-sided prior: nothing to iterate on, hand back the thresholded map.
    const int init_fg = count_fg();
    if (init_fg == 0 || init_fg == n) {
        Rng rng(7);
        const ColorMixture only = fit_color_mixture(colors, cfg.gmm_components, rng);
        seg.energy = energy(r, seg, prior, only, only, cfg);
        if (energy_trace) energy_trace->push_back(seg.energy);
        return seg;
    }

    const double beta = detail::contrast_beta(r) * cfg.beta_contrast;
    Rng rng(7);
    ColorMixture fg, bg;
    const auto side_cost = [&](const ColorMixture& m, int side) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            if (seg.labels[static_cast<std::size_t>(i)] == side) {
                s += -m.log_density(colors[static_cast<std::size_t>(i)]);
            }
        }
        return s;
    };

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        // Refit mixtures on the current split, keeping the better of old/new.
        std::vector<Vec3> fg_pixels, bg_pixels;
        for (int i = 0; i < n; ++i) {
            (seg.labels[static_cast<std::size_t>(i)] ? fg_pixels : bg_pixels)
                .push_back(colors[static_cast<std::size_t>(i)]);
        }
        if (!fg_pixels.empty()) {
            ColorMixture next = fit_color_mixture(fg_pixels, cfg.gmm_components, rng);
            if (fg.empty() || side_cost(next, 1) <= side_cost(fg, 1)) fg = std::move(next);
        }
        if (!bg_pixels.empty()) {
            ColorMixture next = fit_color_mixture(bg_pixels, cfg.gmm_components, rng);
            if (bg.empty() || side_cost(next, 0) <= side_cost(bg, 0)) bg = std::move(next);
        }

        BinaryEnergy problem;
        problem.node_count = n;
        problem.cost0.resize(static_cast<std::size_t>(n));
        problem.cost1.resize(static_cast<std::size_t>(n));
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int i = y * w + x;
                const double m = prior.at(x, y);
                const Vec3& c = colors[static_cast<std::size_t>(i)];
                problem.cost0[static_cast<std::size_t>(i)] =
                    -std::log(1.0 - m + cfg.epsilon_log) - bg.log_density(c);
                problem.cost1[static_cast<std::size_t>(i)] =
                    -std::log(m + cfg.epsilon_log) - fg.log_density(c);
                if (x + 1 < w) {
                    const double wgt =
                        cfg.alpha * std::exp(-beta * (c - colors[static_cast<std::size_t>(i) + 1]).norm2());
                    problem.interactions.push_back({i, i + 1, wgt});
                }
                if (y + 1 < h) {
                    const double wgt =
                        cfg.alpha *
                        std::exp(-beta * (c - colors[static_cast<std::size_t>(i + w)]).norm2());
                    problem.interactions.push_back({i, i + w, wgt});
                }
            }
        }
        const std::vector<int> next = min_cut_labeling(problem);
        int changed = 0;
        for (int i = 0; i < n; ++i) {
            changed += next[static_cast<std::size_t>(i)] != seg.labels[static_cast<std::size_t>(i)];
        }
        seg.labels = next;
        seg.energy = energy(r, seg, prior, fg, bg, cfg);
        if (energy_trace) energy_trace->push_back(seg.energy);
        if (changed < n / 1000 + 1 && iter > 0) break;
    }
    return seg;
}

// Tight boxes around 4-connected object components, ignoring speckles below
// the area fraction threshold.
inline std::vector<BBox> boxes_from_segmentation(const Segmentation& seg,
                                                 const SegEnergyConfig& cfg) {
    const int w = seg.width, h = seg.height;
    const int min_area =
        std::max(1, static_cast<int>(std::ceil(cfg.min_component_area_fraction * w * h)));
    std::vector<int> comp(static_cast<std::size_t>(w) * h, -1);
    std::vector<BBox> out;
    std::vector<int> stack;
    for (int start = 0; start < w * h; ++start) {
        if (seg.labels[static_cast<std::size_t>(start)] != 1 ||
            comp[static_cast<std::size_t>(start)] >= 0) {
            continue;
        }
        int x0 = w, y0 = h, x1 = -1, y1 = -1, area = 0;
        stack.assign(1, start);
        comp[static_cast<std::size_t>(start)] = start;
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            const int x = i % w, y = i / w;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
            ++area;
            const int neighbors[4] = {x > 0 ? i - 1 : -1, x + 1 < w ? i + 1 : -1,
                                      y > 0 ? i - w : -1, y + 1 < h ? i + w : -1};
            for (const int j : neighbors) {
                if (j >= 0 && seg.labels[static_cast<std::size_t>(j)] == 1 &&
                    comp[static_cast<std::size_t>(j)] < 0) {
                    comp[static_cast<std::size_t>(j)] = start;
                    stack.push_back(j);
                }
            }
        }
        if (area >= min_area) {
            out.push_back(BBox{static_cast<double>(x0), static_cast<double>(y0),
                               static_cast<double>(x1 + 1), static_cast<double>(y1 + 1)});
        }
    }
    return out;
}

struct FitConfig {
    ProposalConfig proposals;
    SegEnergyConfig energy;
};

// Full pipeline for one image: proposals, coverage prior, iterated
// segmentation, component boxes.
inline std::vector<BBox> fit_instance_boxes(const Raster& r, const FitConfig& cfg,
                                            Segmentation* seg_out = nullptr) {
    const ProposalSet proposals = generate_proposals(r, cfg.proposals);
    const ForegroundPrior prior = proposal_prior(proposals, r.size());
    Segmentation seg = grabcut_iterate(r, prior, cfg.energy);
    std::vector<BBox> boxes = boxes_from_segmentation(seg, cfg.energy);
    if (seg_out) *seg_out = std::move(seg);
    return boxes;
}

}  // namespace partforge
