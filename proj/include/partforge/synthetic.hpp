#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "partforge/common.hpp"
#include "partforge/evaluation.hpp"
#include "partforge/geometry.hpp"
#include "partforge/image.hpp"
#include "partforge/manifest.hpp"
#include "partforge/viewpoint.hpp"

namespace partforge {

// Deterministic toy-vehicle scenes with exact object, part, and viewpoint
// ground truth. One class ("cart"), three parts: wheel, lamp, window. Side
// views show two wheels low left and right; front and back views show one
// wheel bottom-center; left and right layouts are mirror images. All shapes
// are axis-aligned rectangles and ellipses in flat colors, which is enough
// signal for the gradient-plus-color features while keeping every pixel
// accountable to a known box.

enum class BackgroundMode { uniform = 0, clutter = 1 };

namespace synthpal {

struct Color {
    unsigned char r = 0, g = 0, b = 0;
};

// Part colors sit mid-bin in the 3-per-channel color histogram so per-pixel
// noise up to ~20 never moves their histogram mass.
inline constexpr Color kWheel{45, 45, 50};
inline constexpr Color kLamp{240, 210, 60};
inline constexpr Color kWindow{130, 200, 230};
inline constexpr std::array<Color, 3> kBody{{{210, 60, 50}, {60, 150, 60}, {150, 110, 200}}};
inline constexpr Color kBackdrop{225, 225, 225};
inline constexpr std::array<Color, 5> kClutter{
    {{160, 115, 60}, {60, 160, 160}, {180, 60, 140}, {115, 115, 180}, {140, 140, 60}}};

}  // namespace synthpal

inline constexpr int kBenchmarkPartCount = 3;  // wheel=0, lamp=1, window=2

inline const std::vector<std::string>& benchmark_part_names() {
    static const std::vector<std::string> names = {"wheel", "lamp", "window"};
    return names;
}

struct SceneSpec {
    int width = 96;
    int height = 96;
    int body_style = 0;  // 0..2: proportions and body color variant
    double noise = 0.0;  // per-channel uniform pixel jitter amplitude
    BackgroundMode background = BackgroundMode::uniform;
    int clutter_shapes = 8;
    double scale_jitter = 0.0;  // object scale drawn from [1 - jitter, 1]
    double truncation = 0.0;    // max fraction of the object pushed off-frame
    double occlusion = 0.0;     // max fraction of the object hidden by a blob

    void validate() const {
        require(width >= 32 && height >= 32, errc::invalid_argument,
                "SceneSpec: image too small for the layout");
        require(body_style >= 0 && body_style < 3, errc::invalid_argument,
                "SceneSpec: body_style");
        require(noise >= 0.0 && noise <= 64.0, errc::invalid_argument, "SceneSpec: noise");
        require(clutter_shapes >= 0 && clutter_shapes <= 64, errc::invalid_argument,
                "SceneSpec: clutter_shapes");
        require(scale_jitter >= 0.0 && scale_jitter <= 0.5, errc::invalid_argument,
                "SceneSpec: scale_jitter");
        require(truncation >= 0.0 && truncation <= 0.4, errc::invalid_argument,
                "SceneSpec: truncation");
        require(occlusion >= 0.0 && occlusion <= 0.5, errc::invalid_argument,
                "SceneSpec: occlusion");
    }
};

// Nine presets: body variant (id % 3) crossed with a setting tier (id / 3).
// Tier 0 is pristine, tier 1 adds pixel noise and scale jitter, tier 2 adds
// light background clutter on top. Truncation and occlusion stay off; they
// belong to the hardened target-domain variant below.
inline SceneSpec scene_archetype(int id) {
    require(id >= 0 && id < 9, errc::invalid_argument, "scene_archetype: id in [0, 9)");
    SceneSpec s;
    s.body_style = id % 3;
    switch (id / 3) {
        case 0:
            break;
        case 1:
            s.noise = 8.0;
            s.scale_jitter = 0.15;
            break;
        default:
            s.noise = 14.0;
            s.scale_jitter = 0.25;
            s.background = BackgroundMode::clutter;
            s.clutter_shapes = 5;
            break;
    }
    return s;
}

// Target-domain difficulty: clutter, noise, scale spread, truncation at the
// frame edge, and a blob painted over part of the object.
inline SceneSpec harden(SceneSpec s) {
    s.background = BackgroundMode::clutter;
    s.clutter_shapes = std::max(s.clutter_shapes, 10);
    s.noise = std::max(s.noise, 12.0);
    s.scale_jitter = std::max(s.scale_jitter, 0.3);
    s.truncation = 0.3;
    s.occlusion = 0.25;
    return s;
}

struct SyntheticTruth {
    BBox object_box;
    Viewpoint viewpoint = Viewpoint::front;
    std::vector<GtPart> parts;  // wheels may appear twice
};

struct RenderedScene {
    Raster image;
    SyntheticTruth truth;
};

namespace detail {

struct PaintExtent {
    int x0 = 1 << 30, y0 = 1 << 30, x1 = -(1 << 30), y1 = -(1 << 30);

    bool any() const { return x1 >= x0; }
    void merge(const PaintExtent& o) {
        if (!o.any()) return;
        x0 = std::min(x0, o.x0);
        y0 = std::min(y0, o.y0);
        x1 = std::max(x1, o.x1);
        y1 = std::max(y1, o.y1);
    }
    // box edges on pixel boundaries, matching crop_pixels conventions
    BBox box() const {
        return BBox{static_cast<double>(x0), static_cast<double>(y0),
                    static_cast<double>(x1 + 1), static_cast<double>(y1 + 1)};
    }
};

inline void put_pixel(Raster& r, int x, int y, synthpal::Color c, PaintExtent* ext) {
    if (x < 0 || y < 0 || x >= r.width || y >= r.height) return;
    r.at(x, y, 0) = c.r;
    r.at(x, y, 1) = c.g;
    r.at(x, y, 2) = c.b;
    if (ext != nullptr) {
        ext->x0 = std::min(ext->x0, x);
        ext->y0 = std::min(ext->y0, y);
        ext->x1 = std::max(ext->x1, x);
        ext->y1 = std::max(ext->y1, y);
    }
}

// paints pixels whose center falls inside the half-open box
inline void fill_rect(Raster& r, const BBox& b, synthpal::Color c, PaintExtent* ext) {
    const int x0 = static_cast<int>(std::ceil(b.x_min - 0.5));
    const int y0 = static_cast<int>(std::ceil(b.y_min - 0.5));
    const int x1 = static_cast<int>(std::ceil(b.x_max - 0.5));
    const int y1 = static_cast<int>(std::ceil(b.y_max - 0.5));
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) put_pixel(r, x, y, c, ext);
    }
}

inline void fill_ellipse(Raster& r, const BBox& b, synthpal::Color c, PaintExtent* ext) {
    const double cx = 0.5 * (b.x_min + b.x_max);
    const double cy = 0.5 * (b.y_min + b.y_max);
    const double rx = std::max(0.5 * b.width(), 1e-9);
    const double ry = std::max(0.5 * b.height(), 1e-9);
    const int x0 = static_cast<int>(std::floor(b.x_min));
    const int y0 = static_cast<int>(std::floor(b.y_min));
    const int x1 = static_cast<int>(std::ceil(b.x_max));
    const int y1 = static_cast<int>(std::ceil(b.y_max));
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            const double dx = (x + 0.5 - cx) / rx;
            const double dy = (y + 0.5 - cy) / ry;
            if (dx * dx + dy * dy <= 1.0) put_pixel(r, x, y, c, ext);
        }
    }
}

struct LayoutShape {
    int part_id = -1;  // -1 is the body
    bool ellipse = false;
    BBox unit;  // in object-local coordinates, [0,1] x [0,1]
};

// Per-viewpoint part layout in the object frame. The facing side of a side
// view carries the lamp and the window; front differs from back by the lamp.
inline std::vector<LayoutShape> layout_shapes(Viewpoint v, int body_style) {
    const double top = (body_style == 0) ? 0.16 : (body_style == 1 ? 0.10 : 0.22);
    const double wheel_w = (body_style == 0) ? 0.32 : (body_style == 1 ? 0.28 : 0.36);
    std::vector<LayoutShape> shapes;
    if (v == Viewpoint::left || v == Viewpoint::right) {
        shapes.push_back({-1, false, BBox{0.02, top, 0.98, 0.74}});
        shapes.push_back({2, false, BBox{0.16, top + 0.06, 0.48, 0.52}});
        shapes.push_back({1, true, BBox{0.00, 0.34, 0.14, 0.50}});
        shapes.push_back({0, true, BBox{0.06, 0.56, 0.06 + wheel_w, 1.00}});
        shapes.push_back({0, true, BBox{0.94 - wheel_w, 0.56, 0.94, 1.00}});
        if (v == Viewpoint::right) {
            for (auto& s : shapes) {
                const double x0 = 1.0 - s.unit.x_max;
                const double x1 = 1.0 - s.unit.x_min;
                s.unit.x_min = x0;
                s.unit.x_max = x1;
            }
        }
        return shapes;
    }
    shapes.push_back({-1, false, BBox{0.14, top, 0.86, 0.76}});
    if (v == Viewpoint::front) {
        shapes.push_back({2, false, BBox{0.22, top + 0.05, 0.78, 0.44}});
        shapes.push_back({1, true, BBox{0.18, 0.50, 0.34, 0.64}});
    } else {
        shapes.push_back({2, false, BBox{0.28, top + 0.07, 0.72, 0.42}});
    }
    shapes.push_back({0, true, BBox{0.50 - wheel_w / 2, 0.58, 0.50 + wheel_w / 2, 1.00}});
    return shapes;
}

inline void paint_background(Raster& r, const SceneSpec& spec, Rng& rng) {
    const auto jitter = [&rng](unsigned char base) {
        const int v = static_cast<int>(base) + rng.uniform_int(-12, 12);
        return static_cast<unsigned char>(std::clamp(v, 0, 255));
    };
    const synthpal::Color bg{jitter(synthpal::kBackdrop.r), jitter(synthpal::kBackdrop.g),
                             jitter(synthpal::kBackdrop.b)};
    fill_rect(r, r.full_box(), bg, nullptr);
    if (spec.background != BackgroundMode::clutter) return;
    const double side = std::min(r.width, r.height);
    for (int i = 0; i < spec.clutter_shapes; ++i) {
        const synthpal::Color c =
            synthpal::kClutter[rng.uniform_int(synthpal::kClutter.size())];
        const double w = side * rng.uniform(0.08, 0.30);
        const double h = side * rng.uniform(0.08, 0.30);
        const double x = rng.uniform(-0.2 * w, r.width - 0.8 * w);
        const double y = rng.uniform(-0.2 * h, r.height - 0.8 * h);
        const BBox b{x, y, x + w, y + h};
        if (rng.uniform() < 0.5) {
            fill_rect(r, b, c, nullptr);
        } else {
            fill_ellipse(r, b, c, nullptr);
        }
    }
}

inline void apply_noise(Raster& r, double amplitude, Rng& rng) {
    if (amplitude <= 0.0) return;
    for (auto& v : r.pixels) {
        const int d = static_cast<int>(std::lround(rng.uniform(-amplitude, amplitude)));
        v = static_cast<unsigned char>(std::clamp(static_cast<int>(v) + d, 0, 255));
    }
}

}  // namespace detail

inline RenderedScene render_scene(const SceneSpec& spec, Viewpoint viewpoint,
                                  std::uint64_t seed) {
    spec.validate();
    const bool side_view = viewpoint == Viewpoint::left || viewpoint == Viewpoint::right;
    const double base_w = (side_view ? 0.80 : 0.46) * spec.width;
    const double base_h = (side_view ? 0.56 : 0.62) * spec.height;
    require(base_w * (1.0 - spec.scale_jitter) >= 16.0 &&
                base_h * (1.0 - spec.scale_jitter) >= 16.0,
            errc::invalid_argument, "render_scene: layout infeasible for image size");

    Rng rng(Rng::derive(seed, 0x5ce7e5u));
    RenderedScene out;
    out.image.width = spec.width;
    out.image.height = spec.height;
    out.image.pixels.assign(static_cast<std::size_t>(spec.width) * spec.height * 3, 0);
    out.truth.viewpoint = viewpoint;

    detail::paint_background(out.image, spec, rng);

    const double scale = 1.0 - spec.scale_jitter * rng.uniform();
    const double ow = base_w * scale;
    const double oh = base_h * scale;
    double ox = (spec.width - ow) * rng.uniform();
    double oy = (spec.height - oh) * rng.uniform();
    if (spec.truncation > 0.0 && rng.uniform() < 0.7) {
        const double f = spec.truncation * rng.uniform();
        switch (rng.uniform_int(4)) {
            case 0: ox = -f * ow; break;
            case 1: ox = spec.width - (1.0 - f) * ow; break;
            case 2: oy = -f * oh; break;
            default: oy = spec.height - (1.0 - f) * oh; break;
        }
    }

    detail::PaintExtent object_extent;
    std::vector<std::pair<int, detail::PaintExtent>> part_extents;
    for (const auto& s : detail::layout_shapes(viewpoint, spec.body_style)) {
        const BBox px{ox + s.unit.x_min * ow, oy + s.unit.y_min * oh,
                      ox + s.unit.x_max * ow, oy + s.unit.y_max * oh};
        const synthpal::Color c =
            s.part_id == 0   ? synthpal::kWheel
            : s.part_id == 1 ? synthpal::kLamp
            : s.part_id == 2 ? synthpal::kWindow
                             : synthpal::kBody[static_cast<std::size_t>(spec.body_style)];
        detail::PaintExtent ext;
        if (s.ellipse) {
            detail::fill_ellipse(out.image, px, c, &ext);
        } else {
            detail::fill_rect(out.image, px, c, &ext);
        }
        object_extent.merge(ext);
        if (s.part_id >= 0 && ext.any()) part_extents.push_back({s.part_id, ext});
    }
    require(object_extent.any(), errc::invalid_argument,
            "render_scene: object fell entirely outside the frame");
    out.truth.object_box = object_extent.box();
    for (const auto& [part_id, ext] : part_extents) {
        out.truth.parts.push_back({part_id, ext.box()});
    }

    if (spec.occlusion > 0.0 && rng.uniform() < 0.8) {
        const double area = spec.occlusion * rng.uniform(0.4, 1.0) * ow * oh;
        const double w = std::sqrt(area * rng.uniform(0.6, 1.6));
        const double h = area / std::max(w, 1e-9);
        const double cx = ox + ow * rng.uniform(0.2, 0.8);
        const double cy = oy + oh * rng.uniform(0.2, 0.8);
        const synthpal::Color c =
            synthpal::kClutter[rng.uniform_int(synthpal::kClutter.size())];
        detail::fill_rect(out.image, BBox{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2},
                          c, nullptr);
    }

    detail::apply_noise(out.image, spec.noise, rng);
    return out;
}

inline RenderedScene render_scene(const SceneSpec& spec, std::uint64_t seed) {
    Rng pick(Rng::derive(seed, 0xfacee5u));
    return render_scene(
        spec, static_cast<Viewpoint>(pick.uniform_int(std::uint64_t{kViewpointCount})), seed);
}

// One part drawn in isolation on a uniform background with generous margin,
// the shape covering roughly a third to a half of the frame. With two
// instances the frame is split into left and right halves.
inline RenderedScene render_part(const SceneSpec& spec, int part_id, std::uint64_t seed,
                                 int instances = 1) {
    spec.validate();
    require(part_id >= 0 && part_id < kBenchmarkPartCount, errc::invalid_argument,
            "render_part: part_id");
    require(instances == 1 || instances == 2, errc::invalid_argument,
            "render_part: instances");

    Rng rng(Rng::derive(seed, 0xa97155u));
    RenderedScene out;
    out.image.width = spec.width;
    out.image.height = spec.height;
    out.image.pixels.assign(static_cast<std::size_t>(spec.width) * spec.height * 3, 0);

    SceneSpec bg = spec;
    bg.background = BackgroundMode::uniform;
    detail::paint_background(out.image, bg, rng);

    const synthpal::Color c = part_id == 0   ? synthpal::kWheel
                              : part_id == 1 ? synthpal::kLamp
                                             : synthpal::kWindow;
    const double aspect = part_id == 2 ? 0.7 : 1.0;  // windows are wider than tall
    detail::PaintExtent object_extent;
    for (int i = 0; i < instances; ++i) {
        const double cell_w = static_cast<double>(spec.width) / instances;
        const double cell_x = cell_w * i;
        const double f = rng.uniform(0.38, 0.55);
        const double w = f * std::min(cell_w, static_cast<double>(spec.height));
        const double h = w * aspect;
        const double x = cell_x + (cell_w - w) * rng.uniform(0.25, 0.75);
        const double y = (spec.height - h) * rng.uniform(0.25, 0.75);
        const BBox b{x, y, x + w, y + h};
        detail::PaintExtent ext;
        if (part_id == 2) {
            detail::fill_rect(out.image, b, c, &ext);
        } else {
            detail::fill_ellipse(out.image, b, c, &ext);
        }
        require(ext.any(), errc::invalid_argument, "render_part: frame too small");
        object_extent.merge(ext);
        out.truth.parts.push_back({part_id, ext.box()});
    }
    out.truth.object_box = object_extent.box();

    detail::apply_noise(out.image, spec.noise, rng);
    return out;
}

struct BenchmarkCounts {
    int objects_per_viewpoint = 12;  // front and back sets; the side set gets 2x
    int images_per_part = 10;
    int hard_images = 12;
    int eval_easy = 10;
    int eval_hard = 10;

    void validate() const {
        require(objects_per_viewpoint > 0 && images_per_part > 0 && hard_images > 0 &&
                    eval_easy > 0 && eval_hard > 0,
                errc::invalid_argument, "BenchmarkCounts: all counts must be positive");
    }
};

struct GeneratedBenchmark {
    DatasetManifest manifest;  // reloaded, so paths are absolute and verified
    GroundTruthSet easy_truth;
    GroundTruthSet hard_truth;
    std::filesystem::path manifest_path;
    std::filesystem::path easy_truth_path;
    std::filesystem::path hard_truth_path;
    std::vector<std::string> eval_easy_images;  // dir-relative, the truth keys
    std::vector<std::string> eval_hard_images;
};

// Writes a complete training-plus-evaluation corpus under dir: per-viewpoint
// object sets (left and right mixed into one "side" set), isolated part sets
// (every fifth image holds two instances), a hardened target-domain set with
// object boxes and part truth, and two held-out eval splits. Everything is a
// pure function of (spec, counts, seed); a second run into another directory
// produces byte-identical files.
inline GeneratedBenchmark generate_benchmark(const std::filesystem::path& dir,
                                             const SceneSpec& spec,
                                             const BenchmarkCounts& counts,
                                             std::uint64_t seed) {
    spec.validate();
    counts.validate();
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");

    GeneratedBenchmark out;
    DatasetManifest m;
    m.class_name = "cart";
    m.parts = benchmark_part_names();

    const auto image_seed = [seed](std::uint64_t group, int index) {
        return Rng::derive(Rng::derive(seed, group), static_cast<std::uint64_t>(index));
    };
    const auto rel_name = [](const std::string& stem, int i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "_%03d.ppm", i);
        return "images/" + stem + buf;
    };

    SceneSpec easy = spec;
    easy.truncation = 0.0;
    easy.occlusion = 0.0;
    easy.background = BackgroundMode::uniform;
    const SceneSpec hard = harden(spec);

    // object sets: front, back, and a mixed left/right side set
    for (int v = 0; v < kViewpointCount; ++v) {
        const auto vp = static_cast<Viewpoint>(v);
        const bool side = vp == Viewpoint::left || vp == Viewpoint::right;
        const std::string set_key = side ? kSideSetKey : viewpoint_name(vp);
        for (int i = 0; i < counts.objects_per_viewpoint; ++i) {
            const int slot = side ? (vp == Viewpoint::left ? 2 * i : 2 * i + 1) : i;
            const std::string rel = rel_name("obj_" + std::string(viewpoint_name(vp)), i);
            save_image(dir / rel, render_scene(spec, vp, image_seed(1 + v, i)).image);
            auto& list = m.object_sets[set_key];
            if (side) {
                if (static_cast<int>(list.size()) <= slot) list.resize(slot + 1);
                list[static_cast<std::size_t>(slot)] = rel;
            } else {
                list.push_back(rel);
            }
        }
    }

    SceneSpec part_spec = spec;
    part_spec.width = std::max(48, spec.width / 2);
    part_spec.height = std::max(48, spec.height / 2);
    for (int p = 0; p < kBenchmarkPartCount; ++p) {
        for (int i = 0; i < counts.images_per_part; ++i) {
            const int instances = (i % 5 == 4) ? 2 : 1;
            const std::string rel = rel_name("part_" + m.parts[static_cast<std::size_t>(p)], i);
            save_image(dir / rel,
                       render_part(part_spec, p, image_seed(10 + p, i), instances).image);
            m.part_sets[m.parts[static_cast<std::size_t>(p)]].push_back(rel);
        }
    }

    for (int i = 0; i < counts.hard_images; ++i) {
        const RenderedScene scene = render_scene(hard, image_seed(20, i));
        const std::string rel = rel_name("hard", i);
        save_image(dir / rel, scene.image);
        HardExample ex;
        ex.image_path = rel;
        ex.object_box = scene.truth.object_box;
        for (const auto& p : scene.truth.parts) ex.parts.push_back({p.part_id, p.box});
        // viewpoint left unlabeled on purpose: stage T3 predicts it
        m.hard_domain.push_back(std::move(ex));
    }

    const auto emit_eval = [&](const SceneSpec& s, const std::string& stem, int n,
                               std::uint64_t group, GroundTruthSet* truth,
                               std::vector<std::string>* names) {
        truth->part_names = m.parts;
        for (int i = 0; i < n; ++i) {
            const auto vp = static_cast<Viewpoint>(i % kViewpointCount);
            const RenderedScene scene = render_scene(s, vp, image_seed(group, i));
            const std::string rel = rel_name(stem, i);
            save_image(dir / rel, scene.image);
            GtImage gt;
            gt.objects.push_back({scene.truth.object_box, static_cast<int>(vp)});
            gt.parts = scene.truth.parts;
            truth->images[rel] = std::move(gt);
            names->push_back(rel);
        }
    };
    emit_eval(easy, "eval_easy", counts.eval_easy, 30, &out.easy_truth,
              &out.eval_easy_images);
    emit_eval(hard, "eval_hard", counts.eval_hard, 31, &out.hard_truth,
              &out.eval_hard_images);

    out.manifest_path = dir / "manifest.json";
    out.easy_truth_path = dir / "gt_easy.json";
    out.hard_truth_path = dir / "gt_hard.json";
    save_manifest(m, out.manifest_path.string());
    save_ground_truth(out.easy_truth, out.easy_truth_path.string());
    save_ground_truth(out.hard_truth, out.hard_truth_path.string());
    out.manifest = load_manifest(out.manifest_path.string());
    return out;
}

}  // namespace partforge
