#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "partforge/common.hpp"
#include "partforge/geometry.hpp"
#include "partforge/image.hpp"

namespace partforge {

struct ProposalConfig {
    double base_segmentation_scale = 100.0;
    int min_region_size = 20;
    // Order: color, texture, size, fill.
    std::array<double, 4> merge_similarity_weights{1.0, 1.0, 1.0, 1.0};
    int max_proposals = 2000;
    double min_proposal_side = 4.0;

    void validate() const {
        require(max_proposals > 0, errc::invalid_argument, "ProposalConfig: max_proposals");
        require(min_region_size >= 1, errc::invalid_argument, "ProposalConfig: min_region_size");
        require(base_segmentation_scale > 0.0, errc::invalid_argument,
                "ProposalConfig: base_segmentation_scale");
        for (const double w : merge_similarity_weights) {
            require(w >= 0.0, errc::invalid_argument, "ProposalConfig: negative weight");
        }
    }
};

struct ProposalSet {
    std::vector<BBox> boxes;
    std::string source_image_id;
};

namespace detail {

class UnionFind {
public:
    explicit UnionFind(int n) : parent_(static_cast<std::size_t>(n)), size_(n, 1) {
        for (int i = 0; i < n; ++i) parent_[static_cast<std::size_t>(i)] = i;
    }

    int find(int a) {
        while (parent_[static_cast<std::size_t>(a)] != a) {
            parent_[static_cast<std::size_t>(a)] =
                parent_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(a)])];
            a = parent_[static_cast<std::size_t>(a)];
        }
        return a;
    }

    int unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return a;
        if (size_[static_cast<std::size_t>(a)] < size_[static_cast<std::size_t>(b)])
            std::swap(a, b);
        parent_[static_cast<std::size_t>(b)] = a;
        size_[static_cast<std::size_t>(a)] += size_[static_cast<std::size_t>(b)];
        return a;
    }

    int size(int a) { return size_[static_cast<std::size_t>(find(a))]; }

private:
    std::vector<int> parent_;
    std::vector<int> size_;
};

struct GridEdge {
    int a = 0;
    int b = 0;
    float weight = 0.0f;
};

inline float pixel_distance(const Raster& r, int i, int j) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
        s += sq(static_cast<double>(r.pixels[static_cast<std::size_t>(i) * 3 + c]) -
                static_cast<double>(r.pixels[static_cast<std::size_t>(j) * 3 + c]));
    }
    return static_cast<float>(std::sqrt(s));
}

// Graph-based oversegmentation on color differences: components grow while the
// joining edge is no heavier than each side's internal contrast plus a
// size-shrinking slack. Returns a per-pixel region id (0..regions-1).
inline std::vector<int> oversegment(const Raster& r, double scale, int min_size,
                                    int* region_count) {
    const int w = r.width, h = r.height, n = w * h;
    std::vector<GridEdge> edges;
    edges.reserve(static_cast<std::size_t>(n) * 4);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int i = y * w + x;
            if (x + 1 < w) edges.push_back({i, i + 1, pixel_distance(r, i, i + 1)});
            if (y + 1 < h) edges.push_back({i, i + w, pixel_distance(r, i, i + w)});
            if (x + 1 < w && y + 1 < h)
                edges.push_back({i, i + w + 1, pixel_distance(r, i, i + w + 1)});
            if (x > 0 && y + 1 < h)
                edges.push_back({i, i + w - 1, pixel_distance(r, i, i + w - 1)});
        }
    }
    std::stable_sort(edges.begin(), edges.end(),
                     [](const GridEdge& a, const GridEdge& b) { return a.weight < b.weight; });

    UnionFind uf(n);
    std::vector<float> internal(static_cast<std::size_t>(n), 0.0f);
    for (const auto& e : edges) {
        const int ra = uf.find(e.a);
        const int rb = uf.find(e.b);
        if (ra == rb) continue;
        const double ta = internal[static_cast<std::size_t>(ra)] + scale / uf.size(ra);
        const double tb = internal[static_cast<std::size_t>(rb)] + scale / uf.size(rb);
        if (e.weight <= ta && e.weight <= tb) {
            const int root = uf.unite(ra, rb);
            internal[static_cast<std::size_t>(root)] = e.weight;
        }
    }
    // Absorb undersized components across the lightest boundaries first.
    for (const auto& e : edges) {
        const int ra = uf.find(e.a);
        const int rb = uf.find(e.b);
        if (ra != rb && (uf.size(ra) < min_size || uf.size(rb) < min_size)) uf.unite(ra, rb);
    }

    std::vector<int> ids(static_cast<std::size_t>(n), -1);
    int next = 0;
    std::vector<int> root_to_id(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
        const int root = uf.find(i);
        if (root_to_id[static_cast<std::size_t>(root)] < 0) {
            root_to_id[static_cast<std::size_t>(root)] = next++;
        }
        ids[static_cast<std::size_t>(i)] = root_to_id[static_cast<std::size_t>(root)];
    }
    *region_count = next;
    return ids;
}

constexpr int kColorBins = 75;    // 25 per channel
constexpr int kTextureBins = 24;  // 8 orientations per channel

struct Region {
    int size = 0;
    int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
    std::array<float, kColorBins> color{};
    std::array<float, kTextureBins> texture{};

    BBox box() const {
        return BBox{static_cast<double>(x0), static_cast<double>(y0),
                    static_cast<double>(x1 + 1), static_cast<double>(y1 + 1)};
    }
};

inline void normalize_hist(float* h, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += h[i];
    if (total <= 0.0) return;
    for (int i = 0; i < n; ++i) h[i] = static_cast<float>(h[i] / total);
}

inline double hist_intersection(const float* a, const float* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::min(a[i], b[i]);
    return s;
}

inline double region_similarity(const Region& a, const Region& b, int image_area,
                                const std::array<double, 4>& w) {
    const double s_color = hist_intersection(a.color.data(), b.color.data(), kColorBins);
    const double s_texture = hist_intersection(a.texture.data(), b.texture.data(), kTextureBins);
    const double s_size = 1.0 - static_cast<double>(a.size + b.size) / image_area;
    const int bx0 = std::min(a.x0, b.x0), by0 = std::min(a.y0, b.y0);
    const int bx1 = std::max(a.x1, b.x1), by1 = std::max(a.y1, b.y1);
    const double joint = static_cast<double>(bx1 - bx0 + 1) * (by1 - by0 + 1);
    const double s_fill = 1.0 - (joint - a.size - b.size) / image_area;
    return w[0] * s_color + w[1] * s_texture + w[2] * s_size + w[3] * s_fill;
}

}  // namespace detail

// Class-independent box proposals: oversegment, then greedily merge the most
// similar adjacent regions, emitting every intermediate region's box. Box
// order is merge order (initial regions first), deduplicated, side-filtered,
// then truncated; small early boxes are the valuable ones for part mining.
inline ProposalSet generate_proposals(const Raster& r, const ProposalConfig& cfg,
                                      std::string image_id = {}) {
    require(r.valid(), errc::invalid_argument, "generate_proposals: invalid raster");
    cfg.validate();
    const int w = r.width, h = r.height;
    const int image_area = w * h;

    int region_count = 0;
    const std::vector<int> ids =
        detail::oversegment(r, cfg.base_segmentation_scale, cfg.min_region_size, &region_count);

    std::vector<detail::Region> regions(static_cast<std::size_t>(region_count));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int i = y * w + x;
            auto& reg = regions[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])];
            reg.size += 1;
            reg.x0 = std::min(reg.x0, x);
            reg.y0 = std::min(reg.y0, y);
            reg.x1 = std::max(reg.x1, x);
            reg.y1 = std::max(reg.y1, y);
            for (int c = 0; c < 3; ++c) {
                const int bin = c * 25 + r.at(x, y, c) * 25 / 256;
                reg.color[static_cast<std::size_t>(bin)] += 1.0f;
            }
            // Orientation histogram from central differences, magnitude-weighted.
            for (int c = 0; c < 3; ++c) {
                const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
                const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
                const double dx = static_cast<double>(r.at(xp, y, c)) - r.at(xm, y, c);
                const double dy = static_cast<double>(r.at(x, yp, c)) - r.at(x, ym, c);
                const double mag = std::sqrt(dx * dx + dy * dy);
                if (mag <= 0.0) continue;
                const double angle = std::atan2(dy, dx) + 3.141592653589793;
                int bin = static_cast<int>(angle / (2.0 * 3.141592653589793) * 8.0);
                bin = std::clamp(bin, 0, 7);
                reg.texture[static_cast<std::size_t>(c * 8 + bin)] += static_cast<float>(mag);
            }
        }
    }
    for (auto& reg : regions) {
        detail::normalize_hist(reg.color.data(), detail::kColorBins);
        detail::normalize_hist(reg.texture.data(), detail::kTextureBins);
    }

    // Region adjacency from 4-connected pixel neighbors.
    std::map<std::pair<int, int>, double> sims;
    auto key = [](int a, int b) { return a < b ? std::pair{a, b} : std::pair{b, a}; };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int a = ids[static_cast<std::size_t>(y * w + x)];
            if (x + 1 < w) {
                const int b = ids[static_cast<std::size_t>(y * w + x + 1)];
                if (a != b) sims.emplace(key(a, b), 0.0);
            }
            if (y + 1 < h) {
                const int b = ids[static_cast<std::size_t>((y + 1) * w + x)];
                if (a != b) sims.emplace(key(a, b), 0.0);
            }
        }
    }
    for (auto& [pair, sim] : sims) {
        sim = detail::region_similarity(regions[static_cast<std::size_t>(pair.first)],
                                        regions[static_cast<std::size_t>(pair.second)],
                                        image_area, cfg.merge_similarity_weights);
    }

    std::vector<BBox> ordered;
    for (const auto& reg : regions) ordered.push_back(reg.box());

    // Greedy agglomeration; merged regions get fresh ids at the end of the list.
    while (!sims.empty()) {
        auto best = sims.begin();
        for (auto it = std::next(sims.begin()); it != sims.end(); ++it) {
            if (it->second > best->second) best = it;
        }
        const auto [ia, ib] = best->first;
        const auto& ra = regions[static_cast<std::size_t>(ia)];
        const auto& rb = regions[static_cast<std::size_t>(ib)];

        detail::Region merged;
        merged.size = ra.size + rb.size;
        merged.x0 = std::min(ra.x0, rb.x0);
        merged.y0 = std::min(ra.y0, rb.y0);
        merged.x1 = std::max(ra.x1, rb.x1);
        merged.y1 = std::max(ra.y1, rb.y1);
        const float fa = static_cast<float>(ra.size) / merged.size;
        const float fb = static_cast<float>(rb.size) / merged.size;
        for (int i = 0; i < detail::kColorBins; ++i) {
            merged.color[static_cast<std::size_t>(i)] =
                fa * ra.color[static_cast<std::size_t>(i)] +
                fb * rb.color[static_cast<std::size_t>(i)];
        }
        for (int i = 0; i < detail::kTextureBins; ++i) {
            merged.texture[static_cast<std::size_t>(i)] =
                fa * ra.texture[static_cast<std::size_t>(i)] +
                fb * rb.texture[static_cast<std::size_t>(i)];
        }
        regions.push_back(merged);
        const int id = static_cast<int>(regions.size()) - 1;
        ordered.push_back(merged.box());

        // Rewire neighbors of the two merged regions onto the new one.
        std::vector<int> neighbors;
        for (auto it = sims.begin(); it != sims.end();) {
            const auto [pa, pb] = it->first;
            if (pa == ia || pa == ib || pb == ia || pb == ib) {
                const int other = (pa == ia || pa == ib) ? pb : pa;
                if (other != ia && other != ib) neighbors.push_back(other);
                it = sims.erase(it);
            } else {
                ++it;
            }
        }
        std::sort(neighbors.begin(), neighbors.end());
        neighbors.erase(std::unique(neighbors.begin(), neighbors.end()), neighbors.end());
        for (const int other : neighbors) {
            sims[key(id, other)] = detail::region_similarity(
                merged, regions[static_cast<std::size_t>(other)], image_area,
                cfg.merge_similarity_weights);
        }
    }

    ProposalSet out;
    out.source_image_id = std::move(image_id);
    std::map<std::array<double, 4>, bool> seen;
    for (const auto& b : ordered) {
        if (std::min(b.width(), b.height()) < cfg.min_proposal_side) continue;
        if (static_cast<int>(out.boxes.size()) >= cfg.max_proposals) break;
        auto [it, inserted] = seen.emplace(std::array{b.x_min, b.y_min, b.x_max, b.y_max}, true);
        if (inserted) out.boxes.push_back(b);
    }
    if (out.boxes.empty()) out.boxes.push_back(r.full_box());
    return out;
}

inline std::string proposals_to_csv(const ProposalSet& set) {
    std::string out = "image_id,x_min,y_min,x_max,y_max\n";
    for (const auto& b : set.boxes) {
        out += set.source_image_id + "," + std::to_string(b.x_min) + "," +
               std::to_string(b.y_min) + "," + std::to_string(b.x_max) + "," +
               std::to_string(b.y_max) + "\n";
    }
    return out;
}

}  // namespace partforge
