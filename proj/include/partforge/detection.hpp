#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "partforge/bundle.hpp"
#include "partforge/common.hpp"
#include "partforge/evaluation.hpp"
#include "partforge/geometry.hpp"
#include "partforge/image.hpp"
#include "partforge/proposals.hpp"
#include "partforge/viewpoint.hpp"

namespace partforge {

struct DetectPartsConfig {
    double appearance_weight = 0.5;
    double location_weight = 0.5;
    double nms_iou = 0.3;
    ProposalConfig proposals;

    void validate() const {
        require(appearance_weight >= 0.0 && location_weight >= 0.0 &&
                    appearance_weight + location_weight > 0.0,
                errc::invalid_argument, "DetectPartsConfig: weights");
        require(nms_iou >= 0.0 && nms_iou <= 1.0, errc::invalid_argument,
                "DetectPartsConfig: nms_iou");
        proposals.validate();
    }
};

// Part detection inside one object window. The window is cropped out, the
// crop's facing is predicted, and every proposal is scored per part as
// appearance_weight*A + location_weight*L-hat, with the location density
// min-max normalized within the crop. A part whose (part, facing) location
// model is the empty marker falls back to its bare appearance probability,
// the same rule mining uses; so does everything when location_weight is 0,
// which is also the only mode a T1 bundle accepts. Survivors of per-part NMS
// come back in image coordinates, sorted by descending score.
// Passing r.full_box() as the window gives image-wide detection.
inline std::vector<Detection> detect_parts(const ModelBundle& bundle, const Raster& r,
                                           const BBox& object_box,
                                           const DetectPartsConfig& cfg = {}) {
    validate_bundle(bundle);
    cfg.validate();
    require(r.valid(), errc::invalid_argument, "detect_parts: invalid raster");
    require(object_box.valid(), errc::invalid_argument, "detect_parts: invalid object box");
    const bool use_location = cfg.location_weight > 0.0;
    require(!use_location || bundle.stage != Stage::t1, errc::invalid_state,
            "detect_parts: location scoring needs a staged bundle");

    const Raster crop = crop_pixels(r, object_box);
    const double off_x = std::clamp(std::floor(object_box.x_min), 0.0,
                                    static_cast<double>(r.width - 1));
    const double off_y = std::clamp(std::floor(object_box.y_min), 0.0,
                                    static_cast<double>(r.height - 1));

    const ProposalSet props = generate_proposals(crop, cfg.proposals);
    const auto& boxes = props.boxes;
    if (boxes.empty()) return {};

    Viewpoint facing = Viewpoint::front;
    if (use_location) {
        facing = predict_viewpoint(bundle.viewpoint, crop, crop.full_box()).first;
    }

    const int parts = bundle.part_count();
    std::vector<std::vector<double>> appearance(static_cast<std::size_t>(parts),
                                                std::vector<double>(boxes.size()));
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto probs = score(bundle.appearance, extract_features(crop, boxes[i]));
        for (int p = 0; p < parts; ++p) {
            appearance[static_cast<std::size_t>(p)][i] = probs[static_cast<std::size_t>(p)];
        }
    }

    const Size frame = crop.size();
    std::vector<Detection> out;
    for (int p = 0; p < parts; ++p) {
        const auto& a = appearance[static_cast<std::size_t>(p)];
        std::vector<double> combined;
        if (use_location && has_location_model(bundle, p, facing)) {
            const LocationModel& model = location_model(bundle, p, facing);
            std::vector<double> raw(boxes.size());
            for (std::size_t i = 0; i < boxes.size(); ++i) {
                raw[i] = location_score(model, boxes[i], frame);
            }
            const std::vector<double> norm = normalize_image_scores(raw);
            combined.resize(boxes.size());
            for (std::size_t i = 0; i < boxes.size(); ++i) {
                combined[i] = cfg.appearance_weight * a[i] + cfg.location_weight * norm[i];
            }
        } else {
            combined = a;
        }
        const std::vector<int> kept = select_top_boxes(
            boxes, combined, cfg.nms_iou, static_cast<int>(boxes.size()), 0.0);
        for (const int idx : kept) {
            const BBox& b = boxes[static_cast<std::size_t>(idx)];
            out.push_back({BBox{b.x_min + off_x, b.y_min + off_y, b.x_max + off_x,
                                b.y_max + off_y},
                           combined[static_cast<std::size_t>(idx)], p});
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    return out;
}

struct ObjectDetectorConfig {
    std::vector<double> alpha;  // per-part appearance weights
    std::vector<double> beta;   // per-part location weights
    double nms_iou = 0.3;
    ProposalConfig proposals;

    void validate(int part_count) const {
        require(static_cast<int>(alpha.size()) == part_count &&
                    static_cast<int>(beta.size()) == part_count,
                errc::invalid_argument, "ObjectDetectorConfig: weight count != part count");
        for (const double v : alpha) {
            require(v >= 0.0, errc::invalid_argument, "ObjectDetectorConfig: negative alpha");
        }
        for (const double v : beta) {
            require(v >= 0.0, errc::invalid_argument, "ObjectDetectorConfig: negative beta");
        }
        require(nms_iou >= 0.0 && nms_iou <= 1.0, errc::invalid_argument,
                "ObjectDetectorConfig: nms_iou");
        proposals.validate();
    }
};

namespace detail {

// Everything weight-independent about scoring one image: candidate windows
// with their root probabilities, and per (window, part) the appearance and
// location values of every part proposal contained in the window. Weights
// then only pay for the inner max, which makes grid search over them cheap.
struct ObjectScoringCache {
    std::vector<BBox> boxes;
    std::vector<double> root_prob;
    // pairs[w][p] = (appearance, location) per contained proposal
    std::vector<std::vector<std::vector<std::pair<double, double>>>> pairs;
};

inline ObjectScoringCache build_object_cache(const PartClassifier& root,
                                             const ModelBundle& bundle, const Raster& r,
                                             const ProposalConfig& proposal_cfg) {
    validate_bundle(bundle);
    require(bundle.stage != Stage::t1, errc::invalid_state,
            "detect_objects: needs a staged bundle");
    require(root.stage_tag == StageTag::root && root.class_count == 2 &&
                root.dims == feature_dimension(),
            errc::invalid_argument, "detect_objects: not a root classifier");
    require(r.valid(), errc::invalid_argument, "detect_objects: invalid raster");

    const int parts = bundle.part_count();
    ObjectScoringCache cache;
    const ProposalSet props = generate_proposals(r, proposal_cfg);
    cache.boxes = props.boxes;
    const std::size_t n = cache.boxes.size();

    std::vector<FeatureVector> feats(n);
    std::vector<std::vector<double>> app(static_cast<std::size_t>(parts),
                                         std::vector<double>(n));
    std::vector<Viewpoint> facing(n, Viewpoint::front);
    for (std::size_t i = 0; i < n; ++i) {
        feats[i] = extract_features(r, cache.boxes[i]);
        const auto probs = score(bundle.appearance, feats[i]);
        for (int p = 0; p < parts; ++p) {
            app[static_cast<std::size_t>(p)][i] = probs[static_cast<std::size_t>(p)];
        }
        facing[i] = predict_viewpoint_features(bundle.viewpoint, feats[i]).first;
    }

    cache.root_prob.resize(n);
    cache.pairs.resize(n);
    for (std::size_t w = 0; w < n; ++w) {
        cache.root_prob[w] = score(root, feats[w])[0];
        const BBox& window = cache.boxes[w];
        const Size frame{window.width(), window.height()};
        auto& per_part = cache.pairs[w];
        per_part.resize(static_cast<std::size_t>(parts));
        for (std::size_t j = 0; j < n; ++j) {
            if (!window.contains(cache.boxes[j])) continue;
            const BBox local{cache.boxes[j].x_min - window.x_min,
                             cache.boxes[j].y_min - window.y_min,
                             cache.boxes[j].x_max - window.x_min,
                             cache.boxes[j].y_max - window.y_min};
            for (int p = 0; p < parts; ++p) {
                const auto& model =
                    bundle.location[static_cast<std::size_t>(p) * kViewpointCount +
                                    static_cast<std::size_t>(facing[w])];
                const double loc =
                    model.samples.empty() ? 0.0 : location_score(model, local, frame);
                per_part[static_cast<std::size_t>(p)].push_back(
                    {app[static_cast<std::size_t>(p)][j], loc});
            }
        }
    }
    return cache;
}

// score(w) = R(w) + sum over parts of max(alpha*A + beta*L) over the
// window's contained proposals, an empty set contributing 0.
inline std::vector<double> score_object_cache(const ObjectScoringCache& cache,
                                              const std::vector<double>& alpha,
                                              const std::vector<double>& beta) {
    std::vector<double> scores(cache.boxes.size());
    for (std::size_t w = 0; w < cache.boxes.size(); ++w) {
        double s = cache.root_prob[w];
        for (std::size_t p = 0; p < alpha.size(); ++p) {
            const auto& candidates = cache.pairs[w][p];
            if (candidates.empty()) continue;
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& [a, l] : candidates) {
                best = std::max(best, alpha[p] * a + beta[p] * l);
            }
            s += best;
        }
        scores[w] = s;
    }
    return scores;
}

}  // namespace detail

// Root-plus-parts object detection over a shared proposal pool: every
// proposal is an object candidate, and the pool doubles as the part
// candidates inside each window. Detections carry part_id -1.
inline std::vector<Detection> detect_objects(const PartClassifier& root,
                                             const ModelBundle& bundle, const Raster& r,
                                             const ObjectDetectorConfig& cfg) {
    cfg.validate(bundle.part_count());
    const detail::ObjectScoringCache cache =
        detail::build_object_cache(root, bundle, r, cfg.proposals);
    if (cache.boxes.empty()) return {};
    const std::vector<double> scores = detail::score_object_cache(cache, cfg.alpha, cfg.beta);
    const std::vector<int> kept =
        select_top_boxes(cache.boxes, scores, cfg.nms_iou, static_cast<int>(cache.boxes.size()),
                         -std::numeric_limits<double>::infinity());
    std::vector<Detection> out;
    for (const int idx : kept) {
        out.push_back({cache.boxes[static_cast<std::size_t>(idx)],
                       scores[static_cast<std::size_t>(idx)], -1});
    }
    return out;
}

// Whole-crop object-vs-background classifier feeding R(w).
inline PartClassifier train_root_classifier(const std::vector<const Raster*>& positives,
                                            const std::vector<const Raster*>& negatives,
                                            const TrainConfig& cfg = {},
                                            TrainLog* log = nullptr) {
    require(!positives.empty() && !negatives.empty(), errc::invalid_argument,
            "train_root_classifier: need both classes");
    std::vector<LabeledSample> samples;
    for (const Raster* r : positives) {
        require(r != nullptr, errc::invalid_argument, "train_root_classifier: null image");
        samples.push_back({extract_features(*r, r->full_box()), 0});
    }
    for (const Raster* r : negatives) {
        require(r != nullptr, errc::invalid_argument, "train_root_classifier: null image");
        samples.push_back({extract_features(*r, r->full_box()), 1});
    }
    PartClassifier clf = train_classifier(samples, cfg, log);
    clf.has_background_class = true;
    clf.stage_tag = StageTag::root;
    return clf;
}

struct ValidationImage {
    std::string image_id;
    const Raster* image = nullptr;
    std::vector<BBox> objects;  // ground truth
};

struct ObjectWeightSelection {
    std::vector<double> alpha;
    std::vector<double> beta;
    double map = 0.0;
};

// Grid search for the per-part appearance weights plus one shared location
// weight, chosen by object AP on the held-out images. The image caches are
// built once; each combination only re-runs the cheap max-and-rank step.
// Ties keep the earliest combination in odometer order (alpha digits spin
// fastest), so the result is deterministic.
inline ObjectWeightSelection select_object_weights(
    const PartClassifier& root, const ModelBundle& bundle,
    const std::vector<ValidationImage>& validation, const ObjectDetectorConfig& base,
    const std::vector<double>& grid = {0.0, 0.25, 0.5, 0.75, 1.0},
    double iou_threshold = 0.4) {
    const int parts = bundle.part_count();
    require(!validation.empty(), errc::invalid_argument, "select_object_weights: no images");
    require(!grid.empty(), errc::invalid_argument, "select_object_weights: empty grid");
    for (const double v : grid) {
        require(v >= 0.0, errc::invalid_argument, "select_object_weights: negative grid value");
    }
    double combos = static_cast<double>(grid.size());
    for (int p = 0; p < parts; ++p) combos *= static_cast<double>(grid.size());
    require(combos <= 1e5, errc::invalid_argument,
            "select_object_weights: grid too large for this many parts");

    std::vector<detail::ObjectScoringCache> caches;
    std::map<std::string, std::vector<BBox>> gt;
    for (const auto& v : validation) {
        require(v.image != nullptr, errc::invalid_argument,
                "select_object_weights: null image");
        caches.push_back(detail::build_object_cache(root, bundle, *v.image, base.proposals));
        gt[v.image_id] = v.objects;
    }

    ObjectWeightSelection pick;
    pick.alpha.assign(static_cast<std::size_t>(parts), grid.front());
    pick.beta.assign(static_cast<std::size_t>(parts), grid.front());
    pick.map = -1.0;

    std::vector<std::size_t> digit(static_cast<std::size_t>(parts) + 1, 0);  // last digit = beta
    while (true) {
        std::vector<double> alpha(static_cast<std::size_t>(parts));
        for (int p = 0; p < parts; ++p) {
            alpha[static_cast<std::size_t>(p)] = grid[digit[static_cast<std::size_t>(p)]];
        }
        const std::vector<double> beta(static_cast<std::size_t>(parts),
                                       grid[digit[static_cast<std::size_t>(parts)]]);

        std::vector<EvalDetection> dets;
        for (std::size_t i = 0; i < caches.size(); ++i) {
            const auto scores = detail::score_object_cache(caches[i], alpha, beta);
            const auto kept = select_top_boxes(caches[i].boxes, scores, base.nms_iou,
                                               static_cast<int>(caches[i].boxes.size()),
                                               -std::numeric_limits<double>::infinity());
            for (const int idx : kept) {
                dets.push_back({validation[i].image_id, 0,
                                caches[i].boxes[static_cast<std::size_t>(idx)],
                                scores[static_cast<std::size_t>(idx)]});
            }
        }
        const double ap = average_precision(dets, gt, iou_threshold).ap;
        if (ap > pick.map) {
            pick.map = ap;
            pick.alpha = alpha;
            pick.beta = beta;
        }

        std::size_t d = 0;
        while (d < digit.size() && ++digit[d] == grid.size()) digit[d++] = 0;
        if (d == digit.size()) break;
    }
    return pick;
}

}  // namespace partforge
