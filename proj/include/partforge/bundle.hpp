#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "partforge/classifier.hpp"
#include "partforge/common.hpp"
#include "partforge/location.hpp"
#include "partforge/mining.hpp"
#include "partforge/segmentation.hpp"
#include "partforge/viewpoint.hpp"

namespace partforge {

enum class Stage : std::uint8_t { t1 = 1, t2 = 2, t3 = 3 };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::t1: return "t1";
        case Stage::t2: return "t2";
        case Stage::t3: return "t3";
    }
    raise(errc::invalid_argument, "stage_name: bad value");
}

struct StageConfig {
    int objects_per_viewpoint = 100;
    int images_per_part = 25;
    FitConfig fit;
    TrainConfig train;
    HarvestConfig harvest;
    MiningConfig mining;
    double location_bandwidth = 0.5;
    bool skip_box_fitting = false;  // baseline mode: whole images stand in for crops
    bool warm_start_t3 = false;
    std::uint64_t seed = 0;

    void validate() const {
        require(objects_per_viewpoint > 0, errc::invalid_argument,
                "StageConfig: objects_per_viewpoint");
        require(images_per_part > 0, errc::invalid_argument, "StageConfig: images_per_part");
        require(location_bandwidth > 0.0 && location_bandwidth <= 1.0, errc::invalid_argument,
                "StageConfig: location_bandwidth");
        fit.proposals.validate();
        fit.energy.validate();
        train.validate();
        mining.validate();
        require(harvest.max_per_image >= 1, errc::invalid_argument,
                "StageConfig: harvest.max_per_image");
        require(harvest.nms_iou >= 0.0 && harvest.nms_iou <= 1.0, errc::invalid_argument,
                "StageConfig: harvest.nms_iou");
    }
};

// A location model with no samples marks a (part, viewpoint) pair that the
// training stage could not populate; queries against it fail loudly.
struct ModelBundle {
    Stage stage = Stage::t1;
    std::string class_name;
    std::vector<std::string> part_names;
    PartClassifier appearance;
    std::vector<LocationModel> location;  // empty at T1, else part_count*4 in (part, view) order
    bool has_viewpoint = false;
    ViewpointClassifier viewpoint;
    std::array<Size, 4> frames{{{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}}};
    StageConfig config;
    // Accumulated training samples (background = part_count), carried so a
    // later stage can retrain on the full history from the bundle alone.
    std::vector<LabeledSample> training_cache;

    int part_count() const { return static_cast<int>(part_names.size()); }
};

inline void validate_bundle(const ModelBundle& b) {
    require(!b.class_name.empty(), errc::invalid_state, "bundle: empty class_name");
    require(!b.part_names.empty(), errc::invalid_state, "bundle: no parts");
    const int p = b.part_count();
    require(b.appearance.dims == feature_dimension(), errc::invalid_state,
            "bundle: appearance dims");
    if (b.stage == Stage::t1) {
        require(b.location.empty(), errc::invalid_state, "bundle: T1 carries location models");
        require(!b.has_viewpoint, errc::invalid_state, "bundle: T1 carries a viewpoint model");
        require(!b.appearance.has_background_class && b.appearance.class_count == p,
                errc::invalid_state, "bundle: T1 appearance must be part-way");
    } else {
        require(static_cast<int>(b.location.size()) == p * kViewpointCount, errc::invalid_state,
                "bundle: location model count");
        require(b.has_viewpoint && b.viewpoint.model.class_count == kViewpointCount,
                errc::invalid_state, "bundle: missing viewpoint classifier");
        require(b.appearance.has_background_class && b.appearance.class_count == p + 1,
                errc::invalid_state, "bundle: staged appearance must include background");
    }
    b.config.validate();
}

inline bool has_location_model(const ModelBundle& b, int part, Viewpoint v) {
    if (b.location.empty()) return false;
    require(part >= 0 && part < b.part_count(), errc::invalid_argument,
            "has_location_model: part out of range");
    return !b.location[static_cast<std::size_t>(part) * kViewpointCount +
                       static_cast<std::size_t>(v)]
                .samples.empty();
}

inline const LocationModel& location_model(const ModelBundle& b, int part, Viewpoint v) {
    require(!b.location.empty(), errc::invalid_state,
            "location_model: bundle has no location models");
    require(part >= 0 && part < b.part_count(), errc::invalid_argument,
            "location_model: part out of range");
    const auto& m = b.location[static_cast<std::size_t>(part) * kViewpointCount +
                               static_cast<std::size_t>(v)];
    require(!m.samples.empty(), errc::invalid_state, "location_model: empty (part, viewpoint)");
    return m;
}

namespace detail {

inline constexpr char kBundleMagic[4] = {'P', 'F', 'B', '1'};
inline constexpr std::uint32_t kBundleVersion = 1;

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_str(std::string& out, const std::string& s) {
    put_u64(out, s.size());
    out += s;
}

struct Cursor {
    const std::string& data;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        require(pos + n <= data.size(), errc::corrupt_file, "bundle: truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data[pos++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
        }
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
        }
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = data.substr(pos, n);
        pos += n;
        return s;
    }
};

inline void put_classifier(std::string& out, const PartClassifier& c) {
    put_u32(out, static_cast<std::uint32_t>(c.class_count));
    put_u32(out, static_cast<std::uint32_t>(c.dims));
    put_u8(out, c.has_background_class ? 1 : 0);
    put_u8(out, static_cast<std::uint8_t>(c.stage_tag));
    require(c.weights.size() ==
                    static_cast<std::size_t>(c.class_count) * static_cast<std::size_t>(c.dims) &&
                c.bias.size() == static_cast<std::size_t>(c.class_count),
            errc::invalid_state, "bundle: classifier shape");
    for (const double w : c.weights) put_f64(out, w);
    for (const double b : c.bias) put_f64(out, b);
}

inline PartClassifier get_classifier(Cursor& cur) {
    PartClassifier c;
    c.class_count = static_cast<int>(cur.u32());
    c.dims = static_cast<int>(cur.u32());
    require(c.class_count >= 1 && c.class_count <= 4096 && c.dims >= 1 && c.dims <= (1 << 24),
            errc::corrupt_file, "bundle: classifier shape");
    c.has_background_class = cur.u8() != 0;
    const std::uint8_t tag = cur.u8();
    require(tag <= static_cast<std::uint8_t>(StageTag::root), errc::corrupt_file,
            "bundle: classifier tag");
    c.stage_tag = static_cast<StageTag>(tag);
    c.weights.resize(static_cast<std::size_t>(c.class_count) * static_cast<std::size_t>(c.dims));
    for (auto& w : c.weights) w = cur.f64();
    c.bias.resize(static_cast<std::size_t>(c.class_count));
    for (auto& b : c.bias) b = cur.f64();
    return c;
}

inline void put_location(std::string& out, const LocationModel& m) {
    put_f64(out, m.bandwidth);
    put_f64(out, m.frame_size.width);
    put_f64(out, m.frame_size.height);
    put_u64(out, m.samples.size());
    for (const auto& s : m.samples) {
        put_f64(out, s.x_min);
        put_f64(out, s.y_min);
        put_f64(out, s.x_max);
        put_f64(out, s.y_max);
    }
}

inline LocationModel get_location(Cursor& cur) {
    LocationModel m;
    m.bandwidth = cur.f64();
    m.frame_size.width = cur.f64();
    m.frame_size.height = cur.f64();
    const std::uint64_t n = cur.u64();
    require(n <= (1u << 24), errc::corrupt_file, "bundle: location sample count");
    cur.need(n * 32);
    m.samples.resize(n);
    for (auto& s : m.samples) {
        s.x_min = cur.f64();
        s.y_min = cur.f64();
        s.x_max = cur.f64();
        s.y_max = cur.f64();
    }
    return m;
}

inline void put_config(std::string& out, const StageConfig& c) {
    put_u32(out, static_cast<std::uint32_t>(c.objects_per_viewpoint));
    put_u32(out, static_cast<std::uint32_t>(c.images_per_part));
    put_f64(out, c.fit.proposals.base_segmentation_scale);
    put_u32(out, static_cast<std::uint32_t>(c.fit.proposals.min_region_size));
    for (const double w : c.fit.proposals.merge_similarity_weights) put_f64(out, w);
    put_u32(out, static_cast<std::uint32_t>(c.fit.proposals.max_proposals));
    put_f64(out, c.fit.proposals.min_proposal_side);
    put_f64(out, c.fit.energy.alpha);
    put_f64(out, c.fit.energy.beta_contrast);
    put_f64(out, c.fit.energy.epsilon_log);
    put_u32(out, static_cast<std::uint32_t>(c.fit.energy.gmm_components));
    put_u32(out, static_cast<std::uint32_t>(c.fit.energy.max_iterations));
    put_f64(out, c.fit.energy.min_component_area_fraction);
    put_f64(out, c.train.learning_rate);
    put_u32(out, static_cast<std::uint32_t>(c.train.max_iterations));
    put_u32(out, static_cast<std::uint32_t>(c.train.batch_size));
    put_f64(out, c.train.l2_penalty);
    put_u32(out, static_cast<std::uint32_t>(c.train.early_stop_patience));
    put_u64(out, c.train.seed);
    put_u32(out, static_cast<std::uint32_t>(c.harvest.max_per_image));
    put_f64(out, c.harvest.min_confidence);
    put_f64(out, c.harvest.nms_iou);
    put_u32(out, static_cast<std::uint32_t>(c.mining.max_per_image));
    put_f64(out, c.mining.nms_iou);
    put_f64(out, c.mining.min_combined_score);
    put_f64(out, c.mining.negative_iou_max);
    put_f64(out, c.mining.appearance_weight);
    put_f64(out, c.mining.location_weight);
    put_u32(out, static_cast<std::uint32_t>(c.mining.max_negatives_per_image_per_part));
    put_f64(out, c.location_bandwidth);
    put_u8(out, c.skip_box_fitting ? 1 : 0);
    put_u8(out, c.warm_start_t3 ? 1 : 0);
    put_u64(out, c.seed);
}

inline StageConfig get_config(Cursor& cur) {
    StageConfig c;
    c.objects_per_viewpoint = static_cast<int>(cur.u32());
    c.images_per_part = static_cast<int>(cur.u32());
    c.fit.proposals.base_segmentation_scale = cur.f64();
    c.fit.proposals.min_region_size = static_cast<int>(cur.u32());
    for (double& w : c.fit.proposals.merge_similarity_weights) w = cur.f64();
    c.fit.proposals.max_proposals = static_cast<int>(cur.u32());
    c.fit.proposals.min_proposal_side = cur.f64();
    c.fit.energy.alpha = cur.f64();
    c.fit.energy.beta_contrast = cur.f64();
    c.fit.energy.epsilon_log = cur.f64();
    c.fit.energy.gmm_components = static_cast<int>(cur.u32());
    c.fit.energy.max_iterations = static_cast<int>(cur.u32());
    c.fit.energy.min_component_area_fraction = cur.f64();
    c.train.learning_rate = cur.f64();
    c.train.max_iterations = static_cast<int>(cur.u32());
    c.train.batch_size = static_cast<int>(cur.u32());
    c.train.l2_penalty = cur.f64();
    c.train.early_stop_patience = static_cast<int>(cur.u32());
    c.train.seed = cur.u64();
    c.harvest.max_per_image = static_cast<int>(cur.u32());
    c.harvest.min_confidence = cur.f64();
    c.harvest.nms_iou = cur.f64();
    c.mining.max_per_image = static_cast<int>(cur.u32());
    c.mining.nms_iou = cur.f64();
    c.mining.min_combined_score = cur.f64();
    c.mining.negative_iou_max = cur.f64();
    c.mining.appearance_weight = cur.f64();
    c.mining.location_weight = cur.f64();
    c.mining.max_negatives_per_image_per_part = static_cast<int>(cur.u32());
    c.location_bandwidth = cur.f64();
    c.skip_box_fitting = cur.u8() != 0;
    c.warm_start_t3 = cur.u8() != 0;
    c.seed = cur.u64();
    return c;
}

inline void put_section(std::string& out, const std::string& name, const std::string& payload) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u64(out, payload.size());
    out += payload;
}

inline std::string expect_section(Cursor& cur, const char* name) {
    const std::uint32_t len = cur.u32();
    cur.need(len);
    const std::string got = cur.data.substr(cur.pos, len);
    cur.pos += len;
    require(got == name, errc::corrupt_file, "bundle: expected section " + std::string(name));
    const std::uint64_t payload = cur.u64();
    cur.need(payload);
    std::string body = cur.data.substr(cur.pos, payload);
    cur.pos += payload;
    return body;
}

}  // namespace detail

inline std::string encode_bundle(const ModelBundle& b) {
    validate_bundle(b);
    std::string out;
    out.append(detail::kBundleMagic, 4);
    detail::put_u32(out, detail::kBundleVersion);

    std::string meta;
    detail::put_u8(meta, static_cast<std::uint8_t>(b.stage));
    detail::put_str(meta, b.class_name);
    detail::put_u32(meta, static_cast<std::uint32_t>(b.part_names.size()));
    for (const auto& name : b.part_names) detail::put_str(meta, name);
    detail::put_section(out, "meta", meta);

    std::string config;
    detail::put_config(config, b.config);
    detail::put_section(out, "config", config);

    std::string appearance;
    detail::put_classifier(appearance, b.appearance);
    detail::put_section(out, "appearance", appearance);

    std::string location;
    detail::put_u32(location, static_cast<std::uint32_t>(b.location.size()));
    for (const auto& m : b.location) detail::put_location(location, m);
    detail::put_section(out, "location", location);

    std::string viewpoint;
    detail::put_u8(viewpoint, b.has_viewpoint ? 1 : 0);
    if (b.has_viewpoint) detail::put_classifier(viewpoint, b.viewpoint.model);
    detail::put_section(out, "viewpoint", viewpoint);

    std::string frames;
    for (const auto& f : b.frames) {
        detail::put_f64(frames, f.width);
        detail::put_f64(frames, f.height);
    }
    detail::put_section(out, "frames", frames);

    std::string cache;
    detail::put_u64(cache, b.training_cache.size());
    for (const auto& s : b.training_cache) {
        detail::put_u32(cache, static_cast<std::uint32_t>(s.label));
        detail::put_u32(cache, static_cast<std::uint32_t>(s.features.size()));
        for (const double v : s.features) detail::put_f64(cache, v);
    }
    detail::put_section(out, "cache", cache);
    return out;
}

inline ModelBundle decode_bundle(const std::string& data) {
    require(data.size() >= 8, errc::malformed_header, "bundle: too short for a header");
    require(std::equal(detail::kBundleMagic, detail::kBundleMagic + 4, data.begin()),
            errc::malformed_header, "bundle: bad magic");
    detail::Cursor top{data, 4};
    const std::uint32_t version = top.u32();
    require(version == detail::kBundleVersion, errc::version_mismatch,
            "bundle: unsupported version");

    ModelBundle b;
    {
        const std::string body = detail::expect_section(top, "meta");
        detail::Cursor cur{body, 0};
        const std::uint8_t stage = cur.u8();
        require(stage >= 1 && stage <= 3, errc::corrupt_file, "bundle: bad stage");
        b.stage = static_cast<Stage>(stage);
        b.class_name = cur.str();
        const std::uint32_t parts = cur.u32();
        require(parts >= 1 && parts <= 4096, errc::corrupt_file, "bundle: part count");
        for (std::uint32_t i = 0; i < parts; ++i) b.part_names.push_back(cur.str());
        require(cur.pos == body.size(), errc::corrupt_file, "bundle: meta trailer");
    }
    {
        const std::string body = detail::expect_section(top, "config");
        detail::Cursor cur{body, 0};
        b.config = detail::get_config(cur);
        require(cur.pos == body.size(), errc::corrupt_file, "bundle: config trailer");
    }
    {
        const std::string body = detail::expect_section(top, "appearance");
        detail::Cursor cur{body, 0};
        b.appearance = detail::get_classifier(cur);
        require(cur.pos == body.size(), errc::corrupt_file, "bundle: appearance trailer");
    }
    {
        const std::string body = detail::expect_section(top, "location");
        detail::Cursor cur{body, 0};
        const std::uint32_t n = cur.u32();
        require(n <= 1u << 20, errc::corrupt_file, "bundle: location count");
        for (std::uint32_t i = 0; i < n; ++i) b.location.push_back(detail::get_location(cur));
        require(cur.pos == body.size(), errc::corrupt_file, "bundle: location trailer");
    }
    {
        const std::string body = detail::expect_section(top, "viewpoint");
        detail::Cursor cur{body, 0};
        b.has_viewpoint = cur.u8() != 0;
        if (b.has_viewpoint) b.viewpoint.model = detail::get_classifier(cur);
        require(cur.pos == body.size(), errc::corrupt_file, "bundle: viewpoint trailer");
    }
    {
        const std::string body = detail::expect_section(top, "frames");
        detail::Cursor cur{body, 0};
        for (auto& f : b.frames) {
            f.width = cur.f64();
            f.height = cur.f64();
        }
        require(cur.pos == body.size(), errc::corrupt_file, "bundle: frames trailer");
    }
    {
        const std::string body = detail::expect_section(top, "cache");
        detail::Cursor cur{body, 0};
        const std::uint64_t n = cur.u64();
        for (std::uint64_t i = 0; i < n; ++i) {
            LabeledSample s;
            s.label = static_cast<int>(cur.u32());
            const std::uint32_t dims = cur.u32();
            require(dims <= (1u << 24), errc::corrupt_file, "bundle: cache sample dims");
            cur.need(static_cast<std::size_t>(dims) * 8);
            s.features.resize(dims);
            for (auto& v : s.features) v = cur.f64();
            b.training_cache.push_back(std::move(s));
        }
        require(cur.pos == body.size(), errc::corrupt_file, "bundle: cache trailer");
    }
    require(top.pos == data.size(), errc::corrupt_file, "bundle: trailing bytes");
    try {
        validate_bundle(b);
    } catch (const error&) {
        raise(errc::corrupt_file, "bundle: inconsistent contents");
    }
    return b;
}

inline void save_bundle(const ModelBundle& b, const std::string& path) {
    write_file_atomic(path, encode_bundle(b));
}

inline ModelBundle load_bundle(const std::string& path) { return decode_bundle(read_file(path)); }

}  // namespace partforge
