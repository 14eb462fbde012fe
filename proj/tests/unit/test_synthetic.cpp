#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "partforge/detection.hpp"
#include "partforge/synthetic.hpp"

using namespace partforge;
namespace fs = std::filesystem;

namespace {

errc thrown_code(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return errc::invalid_argument;
}

struct TempDir {
    fs::path path;
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "pfsynXXXXXX").string();
        path = mkdtemp(tmpl.data());
    }
    ~TempDir() { fs::remove_all(path); }
};

bool pixel_is(const Raster& r, int x, int y, synthpal::Color c) {
    return r.at(x, y, 0) == c.r && r.at(x, y, 1) == c.g && r.at(x, y, 2) == c.b;
}

// bounding box of all pixels matching the color exactly, edge convention as
// in the renderer: box edges on pixel boundaries
bool scan_color(const Raster& r, synthpal::Color c, BBox* out) {
    int x0 = r.width, y0 = r.height, x1 = -1, y1 = -1;
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            if (!pixel_is(r, x, y, c)) continue;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    }
    if (x1 < 0) return false;
    *out = BBox{static_cast<double>(x0), static_cast<double>(y0),
                static_cast<double>(x1 + 1), static_cast<double>(y1 + 1)};
    return true;
}

BBox truth_union(const SyntheticTruth& t, int part_id) {
    BBox merged;
    bool first = true;
    for (const auto& p : t.parts) {
        if (p.part_id != part_id) continue;
        if (first) {
            merged = p.box;
            first = false;
        } else {
            merged.x_min = std::min(merged.x_min, p.box.x_min);
            merged.y_min = std::min(merged.y_min, p.box.y_min);
            merged.x_max = std::max(merged.x_max, p.box.x_max);
            merged.y_max = std::max(merged.y_max, p.box.y_max);
        }
    }
    REQUIRE_FALSE(first);
    return merged;
}

int count_parts(const SyntheticTruth& t, int part_id) {
    int n = 0;
    for (const auto& p : t.parts) n += p.part_id == part_id ? 1 : 0;
    return n;
}

synthpal::Color part_color(int part_id) {
    return part_id == 0 ? synthpal::kWheel : part_id == 1 ? synthpal::kLamp
                                                          : synthpal::kWindow;
}

}  // namespace

TEST_CASE("scene rendering is deterministic") {
    const SceneSpec spec = scene_archetype(7);  // noisy clutter tier
    const RenderedScene a = render_scene(spec, Viewpoint::left, 42);
    const RenderedScene b = render_scene(spec, Viewpoint::left, 42);
    CHECK(a.image.pixels == b.image.pixels);
    CHECK(a.truth.object_box == b.truth.object_box);
    REQUIRE(a.truth.parts.size() == b.truth.parts.size());
    for (std::size_t i = 0; i < a.truth.parts.size(); ++i) {
        CHECK(a.truth.parts[i].part_id == b.truth.parts[i].part_id);
        CHECK(a.truth.parts[i].box == b.truth.parts[i].box);
    }

    const RenderedScene c = render_scene(spec, Viewpoint::left, 43);
    CHECK(a.image.pixels != c.image.pixels);

    const RenderedScene d = render_scene(spec, 42);
    const RenderedScene e = render_scene(spec, 42);
    CHECK(d.truth.viewpoint == e.truth.viewpoint);
    CHECK(d.image.pixels == e.image.pixels);
}

TEST_CASE("noise-free truth matches a pixel scan exactly") {
    const SceneSpec spec = scene_archetype(0);
    for (int v = 0; v < kViewpointCount; ++v) {
        const auto vp = static_cast<Viewpoint>(v);
        const RenderedScene scene = render_scene(spec, vp, 100 + v);
        CHECK(scene.truth.viewpoint == vp);

        for (int part = 0; part < kBenchmarkPartCount; ++part) {
            BBox scanned;
            const bool present = scan_color(scene.image, part_color(part), &scanned);
            if (count_parts(scene.truth, part) == 0) {
                CHECK_FALSE(present);
                continue;
            }
            REQUIRE(present);
            CHECK(iou(scanned, truth_union(scene.truth, part)) >= 0.99);
        }
        for (const auto& p : scene.truth.parts) {
            CHECK(scene.truth.object_box.contains(p.box));
        }
    }
}

TEST_CASE("layouts follow the viewpoint conventions") {
    const SceneSpec spec = scene_archetype(0);

    const SyntheticTruth left = render_scene(spec, Viewpoint::left, 5).truth;
    const SyntheticTruth right = render_scene(spec, Viewpoint::right, 5).truth;
    const SyntheticTruth front = render_scene(spec, Viewpoint::front, 5).truth;
    const SyntheticTruth back = render_scene(spec, Viewpoint::back, 5).truth;

    CHECK(count_parts(left, 0) == 2);
    CHECK(count_parts(right, 0) == 2);
    CHECK(count_parts(front, 0) == 1);
    CHECK(count_parts(back, 0) == 1);
    CHECK(count_parts(front, 1) == 1);
    CHECK(count_parts(back, 1) == 0);  // the lamp marks the front face
    CHECK(count_parts(back, 2) == 1);

    // single wheel sits bottom-center
    for (const SyntheticTruth* t : {&front, &back}) {
        const BBox wheel = truth_union(*t, 0);
        const BBox obj = t->object_box;
        const double cx = 0.5 * (wheel.x_min + wheel.x_max);
        CHECK(cx > obj.x_min + obj.width() / 3.0);
        CHECK(cx < obj.x_max - obj.width() / 3.0);
        CHECK(wheel.y_max == Catch::Approx(obj.y_max).margin(1.0));
    }

    // the lamp flips sides between the two side views
    const auto lamp_side = [](const SyntheticTruth& t) {
        const BBox lamp = truth_union(t, 1);
        const double cx = 0.5 * (lamp.x_min + lamp.x_max);
        return cx < 0.5 * (t.object_box.x_min + t.object_box.x_max);
    };
    CHECK(lamp_side(left));
    CHECK_FALSE(lamp_side(right));
}

TEST_CASE("archetype presets and argument validation") {
    const SceneSpec pristine = scene_archetype(0);
    CHECK(pristine.noise == 0.0);
    CHECK(pristine.background == BackgroundMode::uniform);
    CHECK(scene_archetype(2).body_style == 2);
    CHECK(scene_archetype(4).noise > 0.0);
    CHECK(scene_archetype(4).background == BackgroundMode::uniform);
    CHECK(scene_archetype(8).background == BackgroundMode::clutter);

    const SceneSpec hard = harden(pristine);
    CHECK(hard.background == BackgroundMode::clutter);
    CHECK(hard.truncation > 0.0);
    CHECK(hard.occlusion > 0.0);
    CHECK(hard.noise > 0.0);

    CHECK(thrown_code([] { (void)scene_archetype(9); }) == errc::invalid_argument);
    CHECK(thrown_code([] { (void)scene_archetype(-1); }) == errc::invalid_argument);

    SceneSpec tiny;
    tiny.width = 32;
    tiny.height = 32;
    CHECK(thrown_code([&] { (void)render_scene(tiny, Viewpoint::front, 1); }) ==
          errc::invalid_argument);

    SceneSpec bad;
    bad.noise = -1.0;
    CHECK(thrown_code([&] { (void)render_scene(bad, Viewpoint::front, 1); }) ==
          errc::invalid_argument);

    CHECK(thrown_code([] { (void)render_part(SceneSpec{}, 3, 1); }) ==
          errc::invalid_argument);
    CHECK(thrown_code([] { (void)render_part(SceneSpec{}, 0, 1, 5); }) ==
          errc::invalid_argument);
}

TEST_CASE("part isolation renders leave margin around the shape") {
    SceneSpec spec;
    spec.width = 48;
    spec.height = 48;
    for (int part = 0; part < kBenchmarkPartCount; ++part) {
        const RenderedScene one = render_part(spec, part, 20 + part);
        REQUIRE(one.truth.parts.size() == 1);
        CHECK(one.truth.parts[0].part_id == part);
        const BBox box = one.truth.parts[0].box;
        CHECK(box.area() >= 0.04 * 48 * 48);
        CHECK(box.area() <= 0.50 * 48 * 48);

        BBox scanned;
        REQUIRE(scan_color(one.image, part_color(part), &scanned));
        CHECK(iou(scanned, box) >= 0.99);
    }

    const RenderedScene two = render_part(spec, 0, 77, 2);
    REQUIRE(two.truth.parts.size() == 2);
    CHECK(two.truth.parts[0].box.x_max <= two.truth.parts[1].box.x_min);
}

TEST_CASE("benchmark generation is reproducible and self-consistent") {
    TempDir da, db;
    SceneSpec spec = scene_archetype(1);
    BenchmarkCounts counts;
    counts.objects_per_viewpoint = 3;
    counts.images_per_part = 5;
    counts.hard_images = 3;
    counts.eval_easy = 4;
    counts.eval_hard = 4;

    const GeneratedBenchmark a = generate_benchmark(da.path, spec, counts, 9);
    const GeneratedBenchmark b = generate_benchmark(db.path, spec, counts, 9);

    CHECK(read_file(a.manifest_path) == read_file(b.manifest_path));
    CHECK(read_file(a.easy_truth_path) == read_file(b.easy_truth_path));
    CHECK(read_file(a.hard_truth_path) == read_file(b.hard_truth_path));
    for (const char* rel : {"images/obj_front_000.ppm", "images/part_lamp_004.ppm",
                            "images/eval_hard_002.ppm", "images/hard_001.ppm"}) {
        CHECK(read_file(da.path / rel) == read_file(db.path / rel));
    }

    const DatasetManifest& m = a.manifest;
    CHECK(m.class_name == "cart");
    CHECK(m.parts == benchmark_part_names());
    REQUIRE(m.object_sets.count("front") == 1);
    REQUIRE(m.object_sets.count("back") == 1);
    REQUIRE(m.object_sets.count(kSideSetKey) == 1);
    CHECK(m.object_sets.at("front").size() == 3);
    CHECK(m.object_sets.at(kSideSetKey).size() == 6);  // left and right mixed
    for (const auto& part : m.parts) CHECK(m.part_sets.at(part).size() == 5);
    REQUIRE(m.hard_domain.size() == 3);
    for (const auto& ex : m.hard_domain) {
        CHECK(ex.viewpoint == -1);
        CHECK_FALSE(ex.parts.empty());
        CHECK(fs::exists(ex.image_path));
    }

    // every fifth part image holds two instances of the part
    const Raster pair_img = load_image(da.path / "images/part_wheel_004.ppm");
    const Raster single_img = load_image(da.path / "images/part_wheel_003.ppm");
    CHECK(pair_img.width == single_img.width);

    // ground truth evaluated against itself is a perfect detector
    for (const GroundTruthSet* gt : {&a.easy_truth, &a.hard_truth}) {
        std::vector<EvalDetection> dets;
        for (const auto& [id, img] : gt->images) {
            for (const auto& p : img.parts) dets.push_back({id, p.part_id, p.box, 1.0});
        }
        const EvalReport rep =
            evaluate_part_detections(dets, *gt, kBenchmarkPartCount);
        CHECK(rep.mean_ap == 1.0);
        CHECK(rep.parts_with_truth == kBenchmarkPartCount);
    }

    // the manifest round-trips through its own loader
    const DatasetManifest reloaded = load_manifest(a.manifest_path.string());
    CHECK(reloaded.parts == m.parts);
    CHECK(reloaded.hard_domain.size() == m.hard_domain.size());
}

TEST_CASE("a fixed appearance model scores higher on the easy split") {
    TempDir dir;
    BenchmarkCounts counts;
    counts.objects_per_viewpoint = 1;
    counts.images_per_part = 1;
    counts.hard_images = 1;
    counts.eval_easy = 8;
    counts.eval_hard = 8;
    const GeneratedBenchmark bench =
        generate_benchmark(dir.path, scene_archetype(0), counts, 31);

    // hand-built color-histogram classifier over the part palette
    const auto color_dim = [](synthpal::Color c) {
        const int r = std::min(2, c.r * 3 / 256);
        const int g = std::min(2, c.g * 3 / 256);
        const int b = std::min(2, c.b * 3 / 256);
        return feat::kGradientDims + (r * 3 + g) * 3 + b;
    };
    ModelBundle bundle;
    bundle.stage = Stage::t2;
    bundle.class_name = "cart";
    bundle.part_names = benchmark_part_names();
    bundle.appearance.class_count = 4;
    bundle.appearance.dims = static_cast<int>(feature_dimension());
    bundle.appearance.has_background_class = true;
    bundle.appearance.stage_tag = StageTag::a2;
    bundle.appearance.weights.assign(4 * feature_dimension(), 0.0);
    bundle.appearance.bias.assign(4, 0.0);
    for (int p = 0; p < kBenchmarkPartCount; ++p) {
        bundle.appearance
            .weights[static_cast<std::size_t>(p) * feature_dimension() +
                     static_cast<std::size_t>(color_dim(part_color(p)))] = 12.0;
    }
    bundle.appearance.weights[3 * feature_dimension() +
                              static_cast<std::size_t>(color_dim(synthpal::kBackdrop))] = 12.0;
    bundle.has_viewpoint = true;
    bundle.viewpoint.model.class_count = kViewpointCount;
    bundle.viewpoint.model.dims = static_cast<int>(feature_dimension());
    bundle.viewpoint.model.weights.assign(
        static_cast<std::size_t>(kViewpointCount) * feature_dimension(), 0.0);
    bundle.viewpoint.model.bias.assign(kViewpointCount, 0.0);
    bundle.location.resize(static_cast<std::size_t>(kBenchmarkPartCount) * kViewpointCount);

    DetectPartsConfig cfg;
    cfg.appearance_weight = 1.0;
    cfg.location_weight = 0.0;
    const auto split_map = [&](const GroundTruthSet& gt) {
        std::vector<EvalDetection> dets;
        for (const auto& [id, img] : gt.images) {
            const Raster r = load_image(dir.path / id);
            REQUIRE_FALSE(img.objects.empty());
            for (const Detection& d : detect_parts(bundle, r, img.objects[0].box, cfg)) {
                dets.push_back({id, d.part_id, d.box, d.score});
            }
        }
        return evaluate_part_detections(dets, gt, kBenchmarkPartCount).mean_ap;
    };

    const double easy = split_map(bench.easy_truth);
    const double hard = split_map(bench.hard_truth);
    INFO("easy mAP " << easy << " vs hard mAP " << hard);
    CHECK(easy > hard);
    CHECK(easy > 0.5);
}
