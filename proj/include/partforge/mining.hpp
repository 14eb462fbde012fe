#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "partforge/common.hpp"
#include "partforge/geometry.hpp"
#include "partforge/location.hpp"

namespace partforge {

struct MiningConfig {
    int max_per_image = 3;
    double nms_iou = 0.3;
    double min_combined_score = 0.5;
    double negative_iou_max = 0.3;
    double appearance_weight = 0.5;
    double location_weight = 0.5;
    int max_negatives_per_image_per_part = 10;

    void validate() const {
        require(max_per_image >= 1, errc::invalid_argument, "MiningConfig: max_per_image");
        require(nms_iou >= 0.0 && nms_iou <= 1.0, errc::invalid_argument, "MiningConfig: nms_iou");
        require(min_combined_score >= 0.0 && min_combined_score <= 1.0, errc::invalid_argument,
                "MiningConfig: min_combined_score");
        require(negative_iou_max >= 0.0 && negative_iou_max <= 1.0, errc::invalid_argument,
                "MiningConfig: negative_iou_max");
        require(appearance_weight >= 0.0 && location_weight >= 0.0, errc::invalid_argument,
                "MiningConfig: negative weight");
        require(appearance_weight > 0.0 || location_weight > 0.0, errc::invalid_argument,
                "MiningConfig: both weights zero");
    }
};

struct MinedPositive {
    std::string image_id;
    BBox box;
    int part_id = 0;
    double score = 0.0;
};

struct MinedNegative {
    std::string image_id;
    BBox box;
};

struct MinedSet {
    std::vector<MinedPositive> positives;
    std::vector<MinedNegative> negatives;
    int skipped_images = 0;          // images without a usable location model set
    int appearance_only_events = 0;  // (image, part) minings that fell back to appearance
};

// Location densities are put on the appearance probability scale by min-max
// normalization within one image's proposal set; a constant column carries no
// ranking information and maps to all zeros.
inline std::vector<double> normalize_image_scores(const std::vector<double>& raw) {
    if (raw.empty()) return {};
    double lo = raw[0], hi = raw[0];
    for (const double v : raw) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<double> out(raw.size(), 0.0);
    if (hi > lo) {
        for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) / (hi - lo);
    }
    return out;
}

inline double combine_scores(double appearance_prob, double location_normalized,
                             const MiningConfig& cfg) {
    return cfg.appearance_weight * appearance_prob + cfg.location_weight * location_normalized;
}

// Mines one image for every part at once. `appearance[p]` and
// `location_raw[p]` hold per-proposal scores for part p. Positives are the
// top combined-score survivors per part; negatives are proposals that stay
// clear of every positive of the image (any part), subsampled to a per-part
// budget. A part listed in `appearance_only` has no usable location model,
// so its combined score is the bare appearance probability.
inline void mine_image(const std::string& image_id, const std::vector<BBox>& boxes,
                       const std::vector<std::vector<double>>& appearance,
                       const std::vector<std::vector<double>>& location_raw,
                       const MiningConfig& cfg, Rng& rng, MinedSet* out,
                       const std::vector<bool>* appearance_only = nullptr) {
    cfg.validate();
    require(out != nullptr, errc::invalid_argument, "mine_image: null output");
    const std::size_t parts = appearance.size();
    require(location_raw.size() == parts, errc::invalid_argument,
            "mine_image: appearance/location part count mismatch");
    require(appearance_only == nullptr || appearance_only->size() == parts,
            errc::invalid_argument, "mine_image: fallback mask size mismatch");

    std::vector<BBox> image_positives;
    for (std::size_t p = 0; p < parts; ++p) {
        require(appearance[p].size() == boxes.size() && location_raw[p].size() == boxes.size(),
                errc::invalid_argument, "mine_image: score column size mismatch");
        const bool bare = appearance_only != nullptr && (*appearance_only)[p];
        if (bare) ++out->appearance_only_events;
        const std::vector<double> norm = normalize_image_scores(location_raw[p]);
        std::vector<double> combined(boxes.size());
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            combined[i] = bare ? appearance[p][i] : combine_scores(appearance[p][i], norm[i], cfg);
        }
        const auto kept = select_top_boxes(boxes, combined, cfg.nms_iou, cfg.max_per_image,
                                           cfg.min_combined_score);
        for (const int idx : kept) {
            out->positives.push_back({image_id, boxes[static_cast<std::size_t>(idx)],
                                      static_cast<int>(p),
                                      combined[static_cast<std::size_t>(idx)]});
            image_positives.push_back(boxes[static_cast<std::size_t>(idx)]);
        }
    }

    std::vector<BBox> candidates;
    for (const auto& b : boxes) {
        bool clear = true;
        for (const auto& pos : image_positives) {
            if (iou(b, pos) > cfg.negative_iou_max) {
                clear = false;
                break;
            }
        }
        if (clear) candidates.push_back(b);
    }
    const std::size_t budget =
        static_cast<std::size_t>(cfg.max_negatives_per_image_per_part) * std::max<std::size_t>(parts, 1);
    if (candidates.size() > budget) {
        rng.shuffle(candidates);
        candidates.resize(budget);
    }
    for (const auto& b : candidates) out->negatives.push_back({image_id, b});
}

struct MiningImage {
    std::string image_id;
    const Raster* image = nullptr;      // cropped to the object box; frame == object
    const ProposalSet* proposals = nullptr;
    int viewpoint = 0;
};

// Full mining pass: appearance probabilities from the part classifier,
// location densities from the per-viewpoint models (one model per part).
// Images whose viewpoint has no model set are skipped and counted rather
// than failing the run, since predicted viewpoints can fall outside the
// trained set. A present but sample-less model downgrades that part to
// appearance-only scoring.
inline MinedSet mine_part_instances(
    const PartClassifier& clf,
    const std::map<int, std::vector<LocationModel>>& location_by_viewpoint,
    const std::vector<MiningImage>& images, const MiningConfig& cfg, Rng& rng) {
    cfg.validate();
    const int parts = clf.has_background_class ? clf.class_count - 1 : clf.class_count;
    require(parts >= 1, errc::invalid_argument, "mine_part_instances: no part classes");

    MinedSet out;
    for (const auto& mi : images) {
        require(mi.image != nullptr && mi.proposals != nullptr, errc::invalid_argument,
                "mine_part_instances: null image entry");
        const auto it = location_by_viewpoint.find(mi.viewpoint);
        if (it == location_by_viewpoint.end()) {
            ++out.skipped_images;
            continue;
        }
        require(static_cast<int>(it->second.size()) == parts, errc::invalid_argument,
                "mine_part_instances: location model count != part count");
        std::vector<bool> bare(static_cast<std::size_t>(parts));
        for (int p = 0; p < parts; ++p) {
            bare[static_cast<std::size_t>(p)] = it->second[static_cast<std::size_t>(p)].samples.empty();
        }

        const auto& boxes = mi.proposals->boxes;
        const Size frame = mi.image->size();
        std::vector<std::vector<double>> appearance(static_cast<std::size_t>(parts),
                                                    std::vector<double>(boxes.size()));
        std::vector<std::vector<double>> location_raw(static_cast<std::size_t>(parts),
                                                      std::vector<double>(boxes.size(), 0.0));
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            const auto probs = score(clf, extract_features(*mi.image, boxes[i]));
            for (int p = 0; p < parts; ++p) {
                appearance[static_cast<std::size_t>(p)][i] = probs[static_cast<std::size_t>(p)];
                if (!bare[static_cast<std::size_t>(p)]) {
                    location_raw[static_cast<std::size_t>(p)][i] =
                        location_score(it->second[static_cast<std::size_t>(p)], boxes[i], frame);
                }
            }
        }
        mine_image(mi.image_id, boxes, appearance, location_raw, cfg, rng, &out, &bare);
    }
    return out;
}

inline std::string mined_set_to_csv(const MinedSet& set) {
    std::string out = "image_id,kind,part_id,x_min,y_min,x_max,y_max,score\n";
    const auto row = [&out](const std::string& id, const char* kind, int part, const BBox& b,
                            double score) {
        out += id;
        out += ",";
        out += kind;
        out += "," + std::to_string(part) + "," + std::to_string(b.x_min) + "," +
               std::to_string(b.y_min) + "," + std::to_string(b.x_max) + "," +
               std::to_string(b.y_max) + "," + std::to_string(score) + "\n";
    };
    for (const auto& p : set.positives) row(p.image_id, "positive", p.part_id, p.box, p.score);
    for (const auto& n : set.negatives) row(n.image_id, "negative", -1, n.box, 0.0);
    return out;
}

}  // namespace partforge
