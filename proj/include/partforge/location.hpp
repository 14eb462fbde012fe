#pragma once

#include <utility>
#include <vector>

#include "partforge/classifier.hpp"
#include "partforge/common.hpp"
#include "partforge/geometry.hpp"
#include "partforge/proposals.hpp"

namespace partforge {

// Kernel-density model over normalized box positions for one (part,
// viewpoint). With a box-overlap distance D = 1 - IoU and a uniform kernel of
// bandwidth h, the density at a query is count{D <= h} / (2*N*h); at the
// default h = 0.5 that is exactly the fraction of stored samples the query
// overlaps at IoU >= 0.5.
struct LocationModel {
    std::vector<NormalizedBox> samples;
    double bandwidth = 0.5;
    Size frame_size{1.0, 1.0};
};

inline LocationModel build_location_model(const std::vector<std::pair<BBox, Size>>& dets,
                                          double h, const Size& frame_size) {
    require(!dets.empty(), errc::invalid_argument, "build_location_model: no detections");
    require(h > 0.0 && h <= 1.0, errc::invalid_argument, "build_location_model: bandwidth");
    LocationModel m;
    m.bandwidth = h;
    m.frame_size = frame_size;
    m.samples.reserve(dets.size());
    for (const auto& [box, image_size] : dets) {
        m.samples.push_back(normalize_box(box, image_size, frame_size));
    }
    return m;
}

inline double location_score(const LocationModel& m, const BBox& w_prime,
                             const Size& image_size) {
    require(!m.samples.empty(), errc::invalid_state, "location_score: empty model");
    const NormalizedBox q = normalize_box(w_prime, image_size, m.frame_size);
    std::size_t close = 0;
    for (const auto& s : m.samples) {
        if (proposal_distance(q, s) <= m.bandwidth) ++close;
    }
    return static_cast<double>(close) /
           (2.0 * static_cast<double>(m.samples.size()) * m.bandwidth);
}

struct HarvestConfig {
    int max_per_image = 3;
    double min_confidence = 0.5;
    double nms_iou = 0.3;
};

// Confident, non-overlapping detections of one part class across a set of
// already-scored images. `probs` holds, per image, the classifier probability
// of the target part for each proposal box.
inline std::vector<std::pair<BBox, Size>> harvest_scored_detections(
    const std::vector<std::vector<BBox>>& boxes_per_image,
    const std::vector<std::vector<double>>& probs_per_image,
    const std::vector<Size>& image_sizes, const HarvestConfig& cfg) {
    require(boxes_per_image.size() == probs_per_image.size() &&
                boxes_per_image.size() == image_sizes.size(),
            errc::invalid_argument, "harvest_scored_detections: input size mismatch");
    std::vector<std::pair<BBox, Size>> out;
    for (std::size_t img = 0; img < boxes_per_image.size(); ++img) {
        const auto kept =
            select_top_boxes(boxes_per_image[img], probs_per_image[img], cfg.nms_iou,
                             cfg.max_per_image, cfg.min_confidence);
        for (const int idx : kept) {
            out.emplace_back(boxes_per_image[img][static_cast<std::size_t>(idx)],
                             image_sizes[img]);
        }
    }
    return out;
}

// Convenience composition that extracts features and scores them itself.
inline std::vector<std::pair<BBox, Size>> harvest_location_training_samples(
    const PartClassifier& clf, int part_class, const std::vector<const Raster*>& images,
    const std::vector<const ProposalSet*>& proposals, const HarvestConfig& cfg) {
    require(images.size() == proposals.size(), errc::invalid_argument,
            "harvest_location_training_samples: image/proposal count mismatch");
    require(part_class >= 0 && part_class < clf.class_count, errc::invalid_argument,
            "harvest_location_training_samples: part class out of range");
    std::vector<std::vector<BBox>> boxes(images.size());
    std::vector<std::vector<double>> probs(images.size());
    std::vector<Size> sizes(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        sizes[i] = images[i]->size();
        for (const auto& box : proposals[i]->boxes) {
            boxes[i].push_back(box);
            probs[i].push_back(
                score(clf, extract_features(*images[i], box))[static_cast<std::size_t>(
                    part_class)]);
        }
    }
    return harvest_scored_detections(boxes, probs, sizes, cfg);
}

// Density sampled on a grid by sliding a fixed-fraction box across the frame;
// used for debug heatmap dumps.
inline std::vector<double> location_heatmap(const LocationModel& m, int grid_w, int grid_h,
                                            double box_w_frac, double box_h_frac) {
    require(grid_w >= 1 && grid_h >= 1, errc::invalid_argument, "location_heatmap: grid");
    require(box_w_frac > 0.0 && box_w_frac <= 1.0 && box_h_frac > 0.0 && box_h_frac <= 1.0,
            errc::invalid_argument, "location_heatmap: box fraction");
    std::vector<double> out(static_cast<std::size_t>(grid_w) * grid_h);
    const double bw = box_w_frac * m.frame_size.width;
    const double bh = box_h_frac * m.frame_size.height;
    for (int gy = 0; gy < grid_h; ++gy) {
        for (int gx = 0; gx < grid_w; ++gx) {
            const double cx = (gx + 0.5) / grid_w * m.frame_size.width;
            const double cy = (gy + 0.5) / grid_h * m.frame_size.height;
            const BBox q{cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0};
            out[static_cast<std::size_t>(gy) * grid_w + gx] =
                location_score(m, q, m.frame_size);
        }
    }
    return out;
}

}  // namespace partforge
