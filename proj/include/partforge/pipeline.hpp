#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "partforge/bundle.hpp"
#include "partforge/classifier.hpp"
#include "partforge/common.hpp"
#include "partforge/image.hpp"
#include "partforge/location.hpp"
#include "partforge/manifest.hpp"
#include "partforge/mining.hpp"
#include "partforge/proposals.hpp"
#include "partforge/segmentation.hpp"
#include "partforge/viewpoint.hpp"

namespace partforge {

// One object or part instance cut out of a source image at stage T0.
struct CuratedInstance {
    std::string source_path;
    BBox box_in_source;  // the whole image when box fitting is skipped
    Raster crop;
};

struct CuratedDataset {
    std::string class_name;
    std::vector<std::string> part_names;
    std::array<std::vector<CuratedInstance>, kViewpointCount> objects;
    std::vector<std::vector<CuratedInstance>> parts;  // indexed by part id
};

// Result of a stage that may mine new samples. `mined` is empty for the
// degenerate T3-without-hard-domain path; warnings record fallbacks such as
// (part, viewpoint) pairs left without a location model.
struct StageOutput {
    ModelBundle bundle;
    MinedSet mined;
    std::vector<std::string> warnings;
};

namespace detail {

// stable rng streams per training site so adding a stage never shifts another
inline constexpr std::uint64_t kStreamT1Train = 0x7131;
inline constexpr std::uint64_t kStreamT2Mine = 0x7232;
inline constexpr std::uint64_t kStreamT2Train = 0x7233;
inline constexpr std::uint64_t kStreamT2View = 0x7234;
inline constexpr std::uint64_t kStreamT3Mine = 0x7335;
inline constexpr std::uint64_t kStreamT3Train = 0x7336;

inline std::vector<CuratedInstance> curate_from(const std::string& path, const Raster& img,
                                                const StageConfig& cfg) {
    std::vector<CuratedInstance> out;
    if (cfg.skip_box_fitting) {
        out.push_back({path, img.full_box(), img});
        return out;
    }
    for (const BBox& b : fit_instance_boxes(img, cfg.fit)) {
        out.push_back({path, b, crop_pixels(img, b)});
    }
    return out;
}

}  // namespace detail

// Curation: cap every set at its budget (list order stands in for retrieval
// rank), split side-view object sets into left and right, fit instance boxes,
// and cut one crop per fitted instance, so a two-instance image yields two
// curated entries. With skip_box_fitting the whole image stands in for the
// crop, which is the uncropped-baseline training mode. Any part or viewpoint
// that ends up with no instances is a hard error naming the set.
inline CuratedDataset stage_t0(const DatasetManifest& m, const StageConfig& cfg,
                               int workers = 1) {
    validate_manifest(m);
    cfg.validate();
    CuratedDataset out;
    out.class_name = m.class_name;
    out.part_names = m.parts;
    out.parts.resize(m.parts.size());

    for (const auto& [key, paths] : m.object_sets) {
        const std::size_t take =
            std::min(paths.size(), static_cast<std::size_t>(cfg.objects_per_viewpoint));
        std::vector<Raster> whole(take);
        std::vector<std::vector<CuratedInstance>> curated(take);
        parallel_for(take, workers, [&](std::size_t i) {
            whole[i] = load_image(paths[i]);
            curated[i] = detail::curate_from(paths[i], whole[i], cfg);
        });

        std::vector<int> vp_of(take, 0);
        if (key == kSideSetKey) {
            std::vector<const Raster*> ptrs;
            ptrs.reserve(take);
            for (const Raster& w : whole) ptrs.push_back(&w);
            const SideSplit split = split_side_views(ptrs);
            for (const int i : split.left) vp_of[static_cast<std::size_t>(i)] =
                static_cast<int>(Viewpoint::left);
            for (const int i : split.right) vp_of[static_cast<std::size_t>(i)] =
                static_cast<int>(Viewpoint::right);
        } else {
            std::fill(vp_of.begin(), vp_of.end(),
                      static_cast<int>(viewpoint_from_name(key)));
        }
        for (std::size_t i = 0; i < take; ++i) {
            auto& bucket = out.objects[static_cast<std::size_t>(vp_of[i])];
            for (auto& inst : curated[i]) bucket.push_back(std::move(inst));
        }
    }

    for (std::size_t p = 0; p < m.parts.size(); ++p) {
        const auto it = m.part_sets.find(m.parts[p]);
        const std::size_t take =
            it == m.part_sets.end()
                ? 0
                : std::min(it->second.size(),
                           static_cast<std::size_t>(cfg.images_per_part));
        std::vector<std::vector<CuratedInstance>> curated(take);
        parallel_for(take, workers, [&](std::size_t i) {
            const Raster img = load_image(it->second[i]);
            curated[i] = detail::curate_from(it->second[i], img, cfg);
        });
        for (auto& list : curated) {
            for (auto& inst : list) out.parts[p].push_back(std::move(inst));
        }
    }

    for (int v = 0; v < kViewpointCount; ++v) {
        require(!out.objects[static_cast<std::size_t>(v)].empty(), errc::invalid_argument,
                std::string("stage_t0: no curated object instances for viewpoint \"") +
                    viewpoint_name(static_cast<Viewpoint>(v)) + "\"");
    }
    for (std::size_t p = 0; p < out.parts.size(); ++p) {
        require(!out.parts[p].empty(), errc::invalid_argument,
                "stage_t0: no curated part instances for \"" + m.parts[p] + "\"");
    }
    return out;
}

// Part-way appearance model from the curated part crops alone. The tag
// records whether the crops went through box fitting (a1) or are whole
// images (a0, the uncropped baseline).
inline ModelBundle stage_t1(const CuratedDataset& d, const StageConfig& cfg) {
    cfg.validate();
    require(d.part_names.size() >= 2, errc::invalid_argument,
            "stage_t1: need at least two parts");
    require(d.parts.size() == d.part_names.size(), errc::invalid_argument,
            "stage_t1: dataset parts do not match part names");

    ModelBundle b;
    b.stage = Stage::t1;
    b.class_name = d.class_name;
    b.part_names = d.part_names;
    b.config = cfg;
    for (std::size_t p = 0; p < d.parts.size(); ++p) {
        for (const CuratedInstance& inst : d.parts[p]) {
            b.training_cache.push_back(
                {extract_features(inst.crop, inst.crop.full_box()), static_cast<int>(p)});
        }
    }
    TrainConfig tc = cfg.train;
    tc.seed = Rng::derive(cfg.seed, detail::kStreamT1Train);
    b.appearance = train_classifier(b.training_cache, tc);
    b.appearance.stage_tag = cfg.skip_box_fitting ? StageTag::a0 : StageTag::a1;
    validate_bundle(b);
    return b;
}

namespace detail {

struct ObjectInstanceRef {
    const Raster* crop = nullptr;
    int viewpoint = 0;
    std::string id;
};

// location models of one viewpoint, in part order, pulled from a flat bundle
inline std::map<int, std::vector<LocationModel>> location_by_viewpoint(
    const std::vector<LocationModel>& flat, int parts) {
    std::map<int, std::vector<LocationModel>> by_vp;
    for (int v = 0; v < kViewpointCount; ++v) {
        auto& list = by_vp[v];
        list.reserve(static_cast<std::size_t>(parts));
        for (int p = 0; p < parts; ++p) {
            list.push_back(flat[static_cast<std::size_t>(p) * kViewpointCount +
                                static_cast<std::size_t>(v)]);
        }
    }
    return by_vp;
}

// mined boxes live in their instance's crop frame; this turns them into
// labeled feature samples and location-model evidence
inline void absorb_mined(const MinedSet& mined,
                         const std::map<std::string, const ObjectInstanceRef*>& by_id,
                         int part_count, std::vector<LabeledSample>* samples,
                         std::vector<std::vector<std::pair<BBox, Size>>>* location_evidence) {
    for (const auto& pos : mined.positives) {
        const ObjectInstanceRef* inst = by_id.at(pos.image_id);
        samples->push_back({extract_features(*inst->crop, pos.box), pos.part_id});
        if (location_evidence != nullptr) {
            (*location_evidence)[static_cast<std::size_t>(pos.part_id) * kViewpointCount +
                                 static_cast<std::size_t>(inst->viewpoint)]
                .push_back({pos.box, inst->crop->size()});
        }
    }
    for (const auto& neg : mined.negatives) {
        const ObjectInstanceRef* inst = by_id.at(neg.image_id);
        samples->push_back({extract_features(*inst->crop, neg.box), part_count});
    }
}

}  // namespace detail

// From T1 to a complete model: per-(part, viewpoint) location models built on
// confident A1 detections inside the curated object crops, new part samples
// mined with the combined appearance-location score, a (P+1)-way appearance
// model with a background class retrained on everything seen so far, and a
// 4-way viewpoint classifier on the whole object crops. A (part, viewpoint)
// pair that yields no harvested detections keeps an empty-marker location
// model and is mined on appearance alone, with a warning.
inline StageOutput stage_t2(const ModelBundle& bundle_t1, const CuratedDataset& d,
                            const StageConfig& cfg, int workers = 1) {
    validate_bundle(bundle_t1);
    require(bundle_t1.stage == Stage::t1, errc::invalid_state,
            "stage_t2: expected a T1 bundle");
    require(bundle_t1.part_names == d.part_names, errc::invalid_argument,
            "stage_t2: bundle and dataset part lists differ");
    cfg.validate();
    const int parts = bundle_t1.part_count();

    std::vector<detail::ObjectInstanceRef> insts;
    for (int v = 0; v < kViewpointCount; ++v) {
        int ordinal = 0;
        for (const CuratedInstance& inst : d.objects[static_cast<std::size_t>(v)]) {
            insts.push_back(
                {&inst.crop, v, inst.source_path + "#" + std::to_string(ordinal++)});
        }
    }
    std::vector<ProposalSet> props(insts.size());
    parallel_for(insts.size(), workers, [&](std::size_t i) {
        props[i] = generate_proposals(*insts[i].crop, cfg.fit.proposals);
    });

    StageOutput out;
    ModelBundle& b = out.bundle;
    b.stage = Stage::t2;
    b.class_name = bundle_t1.class_name;
    b.part_names = bundle_t1.part_names;
    b.config = cfg;
    b.location.resize(static_cast<std::size_t>(parts) * kViewpointCount);

    for (int v = 0; v < kViewpointCount; ++v) {
        std::vector<const Raster*> imgs;
        std::vector<const ProposalSet*> ps;
        for (std::size_t i = 0; i < insts.size(); ++i) {
            if (insts[i].viewpoint != v) continue;
            imgs.push_back(insts[i].crop);
            ps.push_back(&props[i]);
        }
        for (int p = 0; p < parts; ++p) {
            const auto dets = harvest_location_training_samples(bundle_t1.appearance, p,
                                                                imgs, ps, cfg.harvest);
            auto& slot = b.location[static_cast<std::size_t>(p) * kViewpointCount +
                                    static_cast<std::size_t>(v)];
            if (dets.empty()) {
                slot = LocationModel{};
                out.warnings.push_back("stage_t2: no location evidence for part \"" +
                                       b.part_names[static_cast<std::size_t>(p)] +
                                       "\" viewpoint " +
                                       viewpoint_name(static_cast<Viewpoint>(v)) +
                                       "; appearance-only for that pair");
            } else {
                slot = build_location_model(dets, cfg.location_bandwidth, Size{1.0, 1.0});
            }
        }
    }

    std::vector<MiningImage> mining_images;
    std::map<std::string, const detail::ObjectInstanceRef*> by_id;
    for (std::size_t i = 0; i < insts.size(); ++i) {
        mining_images.push_back({insts[i].id, insts[i].crop, &props[i], insts[i].viewpoint});
        by_id[insts[i].id] = &insts[i];
    }
    const auto loc_by_vp = detail::location_by_viewpoint(b.location, parts);
    Rng mine_rng(Rng::derive(cfg.seed, detail::kStreamT2Mine));
    out.mined =
        mine_part_instances(bundle_t1.appearance, loc_by_vp, mining_images, cfg.mining,
                            mine_rng);

    std::vector<LabeledSample> samples = bundle_t1.training_cache;
    detail::absorb_mined(out.mined, by_id, parts, &samples, nullptr);
    bool has_background = false;
    for (const auto& s : samples) has_background = has_background || s.label == parts;
    require(has_background, errc::invalid_state,
            "stage_t2: mining produced no background samples to train against");

    TrainConfig tc = cfg.train;
    tc.seed = Rng::derive(cfg.seed, detail::kStreamT2Train);
    b.appearance = train_classifier(samples, tc);
    b.appearance.has_background_class = true;
    b.appearance.stage_tag = StageTag::a2;
    b.training_cache = std::move(samples);

    std::array<std::vector<const Raster*>, kViewpointCount> view_sets;
    for (int v = 0; v < kViewpointCount; ++v) {
        for (const CuratedInstance& inst : d.objects[static_cast<std::size_t>(v)]) {
            view_sets[static_cast<std::size_t>(v)].push_back(&inst.crop);
        }
    }
    TrainConfig vc = cfg.train;
    vc.seed = Rng::derive(cfg.seed, detail::kStreamT2View);
    b.viewpoint = train_viewpoint_classifier(view_sets, vc);
    b.has_viewpoint = true;

    validate_bundle(b);
    return out;
}

// Adaptation to the difficult domain: facing is predicted with the T2
// viewpoint model (a manifest-supplied label wins when present), mining runs
// inside the given object boxes with the T2 appearance and location models,
// location models are rebuilt on the union of old and new evidence, and the
// appearance model retrains on the accumulated cache, from scratch unless
// warm_start_t3 continues from the T2 weights. An empty hard domain returns
// the T2 model relabeled, with a warning.
inline StageOutput stage_t3(const ModelBundle& bundle_t2,
                            const std::vector<HardExample>& hard_domain,
                            const StageConfig& cfg, int workers = 1) {
    validate_bundle(bundle_t2);
    require(bundle_t2.stage == Stage::t2, errc::invalid_state,
            "stage_t3: expected a T2 bundle");
    cfg.validate();

    StageOutput out;
    if (hard_domain.empty()) {
        out.bundle = bundle_t2;
        out.bundle.stage = Stage::t3;
        out.bundle.config = cfg;
        out.warnings.push_back(
            "stage_t3: hard domain is empty; carrying the T2 model forward");
        return out;
    }
    const int parts = bundle_t2.part_count();

    struct HardInstance {
        Raster crop;
        ProposalSet props;
        int viewpoint = 0;
    };
    std::vector<HardInstance> insts(hard_domain.size());
    parallel_for(hard_domain.size(), workers, [&](std::size_t i) {
        const Raster img = load_image(hard_domain[i].image_path);
        insts[i].crop = crop_pixels(img, hard_domain[i].object_box);
        insts[i].props = generate_proposals(insts[i].crop, cfg.fit.proposals);
        insts[i].viewpoint =
            hard_domain[i].viewpoint >= 0
                ? hard_domain[i].viewpoint
                : static_cast<int>(predict_viewpoint(bundle_t2.viewpoint, insts[i].crop,
                                                     insts[i].crop.full_box())
                                       .first);
    });

    std::vector<MiningImage> mining_images;
    std::vector<detail::ObjectInstanceRef> refs(insts.size());
    std::map<std::string, const detail::ObjectInstanceRef*> by_id;
    std::map<std::string, int> path_ordinal;
    for (std::size_t i = 0; i < insts.size(); ++i) {
        const int ordinal = path_ordinal[hard_domain[i].image_path]++;
        refs[i] = {&insts[i].crop, insts[i].viewpoint,
                   hard_domain[i].image_path + "#" + std::to_string(ordinal)};
        mining_images.push_back({refs[i].id, &insts[i].crop, &insts[i].props,
                                 insts[i].viewpoint});
        by_id[refs[i].id] = &refs[i];
    }

    const auto loc_by_vp = detail::location_by_viewpoint(bundle_t2.location, parts);
    Rng mine_rng(Rng::derive(cfg.seed, detail::kStreamT3Mine));
    out.mined = mine_part_instances(bundle_t2.appearance, loc_by_vp, mining_images,
                                    cfg.mining, mine_rng);
    if (out.mined.skipped_images > 0) {
        out.warnings.push_back("stage_t3: " + std::to_string(out.mined.skipped_images) +
                               " hard images skipped for lack of location models");
    }

    // old models contribute their stored samples verbatim: a frame-sized
    // sample normalized by the frame is itself
    std::vector<std::vector<std::pair<BBox, Size>>> evidence(
        static_cast<std::size_t>(parts) * kViewpointCount);
    for (std::size_t k = 0; k < bundle_t2.location.size(); ++k) {
        const LocationModel& old = bundle_t2.location[k];
        for (const NormalizedBox& s : old.samples) {
            evidence[k].push_back(
                {BBox{s.x_min, s.y_min, s.x_max, s.y_max}, old.frame_size});
        }
    }
    std::vector<LabeledSample> samples = bundle_t2.training_cache;
    detail::absorb_mined(out.mined, by_id, parts, &samples, &evidence);

    ModelBundle& b = out.bundle;
    b.stage = Stage::t3;
    b.class_name = bundle_t2.class_name;
    b.part_names = bundle_t2.part_names;
    b.config = cfg;
    b.frames = bundle_t2.frames;
    b.location.resize(evidence.size());
    for (std::size_t k = 0; k < evidence.size(); ++k) {
        b.location[k] = evidence[k].empty()
                            ? LocationModel{}
                            : build_location_model(evidence[k], cfg.location_bandwidth,
                                                   Size{1.0, 1.0});
    }

    TrainConfig tc = cfg.train;
    tc.seed = Rng::derive(cfg.seed, detail::kStreamT3Train);
    b.appearance = train_classifier(samples, tc, nullptr,
                                    cfg.warm_start_t3 ? &bundle_t2.appearance : nullptr);
    b.appearance.has_background_class = true;
    b.appearance.stage_tag = StageTag::a3;
    b.training_cache = std::move(samples);
    b.viewpoint = bundle_t2.viewpoint;
    b.has_viewpoint = true;

    validate_bundle(b);
    return out;
}

}  // namespace partforge
