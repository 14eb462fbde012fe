#include <catch2/catch_amalgamated.hpp>

#include "partforge/segmentation.hpp"

using namespace partforge;

namespace {

Raster solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Raster img;
    img.width = w;
    img.height = h;
    img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (int i = 0; i < w * h; ++i) {
        img.pixels[static_cast<std::size_t>(i) * 3 + 0] = r;
        img.pixels[static_cast<std::size_t>(i) * 3 + 1] = g;
        img.pixels[static_cast<std::size_t>(i) * 3 + 2] = b;
    }
    return img;
}

void paint(Raster& img, const BBox& box, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (int y = static_cast<int>(box.y_min); y < static_cast<int>(box.y_max); ++y) {
        for (int x = static_cast<int>(box.x_min); x < static_cast<int>(box.x_max); ++x) {
            img.at(x, y, 0) = r;
            img.at(x, y, 1) = g;
            img.at(x, y, 2) = b;
        }
    }
}

ForegroundPrior box_prior(int w, int h, const BBox& box, double inside, double outside) {
    ForegroundPrior prior;
    prior.width = w;
    prior.height = h;
    prior.prob.resize(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool in = x >= box.x_min && x < box.x_max && y >= box.y_min && y < box.y_max;
            prior.prob[static_cast<std::size_t>(y) * w + x] = in ? inside : outside;
        }
    }
    return prior;
}

ColorMixture point_mixture(double r, double g, double b) {
    Gaussian3 comp;
    comp.weight = 1.0;
    comp.mean = {r, g, b};
    comp.cov = Mat3::identity(0.05);
    comp.refresh();
    ColorMixture m;
    m.components = {comp};
    return m;
}

}  // namespace

TEST_CASE("proposal prior counts covering boxes per pixel") {
    ProposalSet set;
    set.source_image_id = "p";
    // Ten boxes; pixel (1,1) center (1.5,1.5) is inside boxes spanning [0,4)^2.
    for (int i = 0; i < 3; ++i) set.boxes.push_back(BBox{0, 0, 4, 4});
    for (int i = 0; i < 7; ++i) set.boxes.push_back(BBox{5, 5, 9, 9});
    const ForegroundPrior prior = proposal_prior(set, Size{10, 10});
    REQUIRE(prior.at(1, 1) == Catch::Approx(0.3).margin(1e-12));
    REQUIRE(prior.at(6, 6) == Catch::Approx(0.7).margin(1e-12));
    REQUIRE(prior.at(9, 0) == 0.0);

    ProposalSet all;
    all.boxes = {BBox{0, 0, 10, 10}, BBox{0, 0, 10, 10}};
    const ForegroundPrior ones = proposal_prior(all, Size{10, 10});
    for (const double p : ones.prob) REQUIRE(p == 1.0);
}

TEST_CASE("proposal prior requires at least one box") {
    ProposalSet empty;
    REQUIRE_THROWS_AS(proposal_prior(empty, Size{4, 4}), error);
}

TEST_CASE("energy is labeling-independent in the fully symmetric case") {
    Rng rng(61);
    Raster img = solid(6, 5, 0, 0, 0);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
    ForegroundPrior prior = box_prior(6, 5, BBox{0, 0, 0, 0}, 0.5, 0.5);
    const ColorMixture m = point_mixture(0.5, 0.5, 0.5);
    SegEnergyConfig cfg;
    cfg.alpha = 0.0;

    Segmentation seg;
    seg.width = 6;
    seg.height = 5;
    seg.labels.assign(30, 0);
    const double e0 = energy(img, seg, prior, m, m, cfg);
    for (int trial = 0; trial < 10; ++trial) {
        for (auto& l : seg.labels) l = static_cast<int>(rng.uniform_int(2));
        REQUIRE(energy(img, seg, prior, m, m, cfg) == Catch::Approx(e0).margin(1e-9));
    }
}

TEST_CASE("label disagreement on one edge costs the contrast-weighted alpha") {
    Raster img = solid(2, 1, 30, 60, 90);
    img.at(1, 0, 0) = 200;
    img.at(1, 0, 1) = 10;
    img.at(1, 0, 2) = 50;
    ForegroundPrior prior = box_prior(2, 1, BBox{0, 0, 0, 0}, 0.5, 0.5);
    const ColorMixture m = point_mixture(0.4, 0.4, 0.4);
    SegEnergyConfig cfg;
    cfg.alpha = 3.25;

    Segmentation same, split;
    same.width = split.width = 2;
    same.height = split.height = 1;
    same.labels = {0, 0};
    split.labels = {0, 1};

    const double diff2 = (pixel_color(img, 0, 0) - pixel_color(img, 1, 0)).norm2();
    const double beta = 1.0 / (2.0 * diff2);  // single edge, so the mean is itself
    const double expected = cfg.alpha * std::exp(-beta * diff2);
    REQUIRE(energy(img, split, prior, m, m, cfg) - energy(img, same, prior, m, m, cfg) ==
            Catch::Approx(expected).margin(1e-12));
    REQUIRE(expected == Catch::Approx(cfg.alpha * std::exp(-0.5)).margin(1e-12));
}

TEST_CASE("prior term vanishes for covered foreground as epsilon shrinks") {
    Raster img = solid(3, 3, 100, 100, 100);
    ForegroundPrior prior = box_prior(3, 3, BBox{0, 0, 3, 3}, 1.0, 1.0);
    const ColorMixture m = point_mixture(100 / 255.0, 100 / 255.0, 100 / 255.0);
    SegEnergyConfig cfg;
    cfg.alpha = 0.0;
    Segmentation seg;
    seg.width = seg.height = 3;
    seg.labels.assign(9, 1);
    const double with_appearance = energy(img, seg, prior, m, m, cfg);
    double appearance_only = 0.0;
    for (int i = 0; i < 9; ++i) appearance_only += -m.log_density({100 / 255.0, 100 / 255.0, 100 / 255.0});
    // What remains is the prior term, which is -9*log(1+eps), essentially 0.
    REQUIRE(with_appearance - appearance_only == Catch::Approx(0.0).margin(1e-5));
}

TEST_CASE("grabcut separates disjoint colors and its energy never increases") {
    Raster img = solid(48, 40, 235, 235, 235);
    const BBox truth{12, 10, 36, 30};
    paint(img, truth, 40, 90, 160);
    const ForegroundPrior prior = box_prior(48, 40, truth, 0.85, 0.15);
    SegEnergyConfig cfg;
    std::vector<double> trace;
    const Segmentation seg = grabcut_iterate(img, prior, cfg, &trace);

    REQUIRE(trace.size() >= 2);
    for (std::size_t i = 1; i < trace.size(); ++i) {
        REQUIRE(trace[i] <= trace[i - 1] + 1e-9);
    }
    REQUIRE(trace.size() <= 3);  // clean colors converge immediately

    int correct = 0;
    for (int y = 0; y < 40; ++y) {
        for (int x = 0; x < 48; ++x) {
            const bool in = x >= truth.x_min && x < truth.x_max && y >= truth.y_min && y < truth.y_max;
            correct += seg.label(x, y) == (in ? 1 : 0);
        }
    }
    REQUIRE(static_cast<double>(correct) / (48 * 40) >= 0.99);
}

TEST_CASE("grabcut energy is non-increasing on noisy inputs") {
    Rng rng(62);
    for (int trial = 0; trial < 3; ++trial) {
        Raster img = solid(32, 32, 220, 220, 220);
        paint(img, BBox{8, 8, 24, 24}, 60, 60, 160);
        for (auto& p : img.pixels) {
            const int v = p + rng.uniform_int(0, 30) - 15;
            p = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }
        ForegroundPrior prior = box_prior(32, 32, BBox{8, 8, 24, 24}, 0.7, 0.25);
        std::vector<double> trace;
        grabcut_iterate(img, prior, SegEnergyConfig{}, &trace);
        for (std::size_t i = 1; i < trace.size(); ++i) {
            REQUIRE(trace[i] <= trace[i - 1] + 1e-9);
        }
    }
}

TEST_CASE("one-sided priors return the trivial segmentation") {
    const Raster img = solid(8, 8, 50, 120, 190);
    const Segmentation all_fg =
        grabcut_iterate(img, box_prior(8, 8, BBox{0, 0, 0, 0}, 0.9, 0.9), SegEnergyConfig{});
    for (const int l : all_fg.labels) REQUIRE(l == 1);
    const Segmentation all_bg =
        grabcut_iterate(img, box_prior(8, 8, BBox{0, 0, 0, 0}, 0.1, 0.1), SegEnergyConfig{});
    for (const int l : all_bg.labels) REQUIRE(l == 0);
}

TEST_CASE("component boxes are tight and speckle-filtered") {
    Segmentation seg;
    seg.width = 20;
    seg.height = 12;
    seg.labels.assign(240, 0);
    SegEnergyConfig cfg;
    cfg.min_component_area_fraction = 0.02;  // 240*0.02 = 4.8 -> area >= 5

    SECTION("all background gives nothing") {
        REQUIRE(boxes_from_segmentation(seg, cfg).empty());
    }

    SECTION("solid rectangle gives exactly its bounds") {
        for (int y = 3; y < 9; ++y) {
            for (int x = 5; x < 11; ++x) seg.labels[static_cast<std::size_t>(y) * 20 + x] = 1;
        }
        const auto boxes = boxes_from_segmentation(seg, cfg);
        REQUIRE(boxes.size() == 1);
        REQUIRE(boxes[0] == BBox{5, 3, 11, 9});
    }

    SECTION("two blobs give one box each, speckle dropped") {
        for (int y = 1; y < 5; ++y) {
            for (int x = 1; x < 4; ++x) seg.labels[static_cast<std::size_t>(y) * 20 + x] = 1;
        }
        for (int y = 6; y < 11; ++y) {
            for (int x = 12; x < 19; ++x) seg.labels[static_cast<std::size_t>(y) * 20 + x] = 1;
        }
        seg.labels[0] = 1;  // isolated 1-pixel speckle, below the area floor
        const auto boxes = boxes_from_segmentation(seg, cfg);
        REQUIRE(boxes.size() == 2);
        REQUIRE(((boxes[0] == BBox{1, 1, 4, 5} && boxes[1] == BBox{12, 6, 19, 11}) ||
                 (boxes[1] == BBox{1, 1, 4, 5} && boxes[0] == BBox{12, 6, 19, 11})));
    }
}

TEST_CASE("fit_instance_boxes recovers a planted object end to end") {
    Raster img = solid(64, 64, 225, 228, 230);
    const BBox truth{16, 12, 48, 52};
    paint(img, truth, 150, 60, 40);
    const auto boxes = fit_instance_boxes(img, FitConfig{});
    REQUIRE(boxes.size() == 1);
    REQUIRE(iou(boxes[0], truth) >= 0.9);
}
