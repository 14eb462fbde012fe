#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "partforge/location.hpp"

using namespace partforge;

namespace {

// Independent of the library's geometry helpers.
double ref_iou(const NormalizedBox& a, const NormalizedBox& b) {
    const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    return inter / (a.area() + b.area() - inter);
}

NormalizedBox random_nbox(Rng& rng) {
    const double x0 = rng.uniform(0.0, 0.8);
    const double y0 = rng.uniform(0.0, 0.8);
    const double w = rng.uniform(0.05, 1.0 - x0);
    const double h = rng.uniform(0.05, 1.0 - y0);
    return {x0, y0, x0 + w, y0 + h};
}

errc thrown_code(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return errc::invalid_argument;
}

}  // namespace

TEST_CASE("single identical sample at default bandwidth scores 1") {
    LocationModel m;
    m.samples = {{0.2, 0.2, 0.6, 0.6}};
    CHECK(location_score(m, BBox{0.2, 0.2, 0.6, 0.6}, Size{1.0, 1.0}) == 1.0);
}

TEST_CASE("disjoint query scores 0") {
    LocationModel m;
    m.samples = {{0.0, 0.0, 0.3, 0.3}};
    CHECK(location_score(m, BBox{0.7, 0.7, 1.0, 1.0}, Size{1.0, 1.0}) == 0.0);
}

TEST_CASE("four samples with exactly two in range scores one half") {
    // Query {0,0,.4,.4}: sample 1 identical (distance 0), sample 2 overlaps at
    // IoU exactly 0.5 (distance 0.5, inclusive boundary), samples 3 and 4 are
    // too far. count/(2*N*h) = 2/(2*4*0.5) = 0.5.
    LocationModel m;
    m.samples = {{0.0, 0.0, 0.4, 0.4},
                 {0.0, 0.0, 0.4, 0.2},
                 {0.6, 0.6, 1.0, 1.0},
                 {0.0, 0.0, 0.1, 0.1}};
    CHECK(location_score(m, BBox{0.0, 0.0, 0.4, 0.4}, Size{1.0, 1.0}) ==
          Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("bandwidth 1 accepts every sample so every query scores one half") {
    LocationModel m;
    m.bandwidth = 1.0;
    m.samples = {{0.0, 0.0, 0.2, 0.2}, {0.5, 0.5, 0.9, 0.9}, {0.1, 0.6, 0.4, 0.8}};
    Rng rng(11);
    for (int t = 0; t < 20; ++t) {
        const NormalizedBox q = random_nbox(rng);
        CHECK(location_score(m, BBox{q.x_min, q.y_min, q.x_max, q.y_max}, Size{1.0, 1.0}) ==
              0.5);
    }
}

TEST_CASE("density matches a direct counting oracle on random inputs") {
    Rng rng(202);
    for (int trial = 0; trial < 200; ++trial) {
        LocationModel m;
        m.bandwidth = rng.uniform(0.1, 1.0);
        const int n = 1 + static_cast<int>(rng.uniform_int(12));
        for (int i = 0; i < n; ++i) m.samples.push_back(random_nbox(rng));
        const NormalizedBox q = random_nbox(rng);

        int close = 0;
        for (const auto& s : m.samples) {
            if (1.0 - ref_iou(q, s) <= m.bandwidth) ++close;
        }
        const double expected = close / (2.0 * n * m.bandwidth);
        const double got =
            location_score(m, BBox{q.x_min, q.y_min, q.x_max, q.y_max}, Size{1.0, 1.0});
        REQUIRE(got == Catch::Approx(expected).margin(1e-12));
        REQUIRE(got <= 1.0 / (2.0 * m.bandwidth) + 1e-12);
    }
}

TEST_CASE("bimodal sample set peaks at both modes and vanishes between them") {
    LocationModel m;
    for (int i = 0; i < 5; ++i) m.samples.push_back({0.1, 0.1, 0.3, 0.3});
    for (int i = 0; i < 5; ++i) m.samples.push_back({0.7, 0.7, 0.9, 0.9});
    const Size frame{1.0, 1.0};
    CHECK(location_score(m, BBox{0.1, 0.1, 0.3, 0.3}, frame) >= 0.4);
    CHECK(location_score(m, BBox{0.7, 0.7, 0.9, 0.9}, frame) >= 0.4);
    CHECK(location_score(m, BBox{0.4, 0.4, 0.6, 0.6}, frame) == 0.0);
}

TEST_CASE("building a model rescales detections into the frame") {
    const std::vector<std::pair<BBox, Size>> dets = {
        {BBox{10.0, 20.0, 50.0, 100.0}, Size{100.0, 200.0}}};

    const LocationModel unit = build_location_model(dets, 0.5, Size{1.0, 1.0});
    REQUIRE(unit.samples.size() == 1);
    CHECK(unit.samples[0] == NormalizedBox{0.1, 0.1, 0.5, 0.5});

    const LocationModel wide = build_location_model(dets, 0.25, Size{2.0, 4.0});
    CHECK(wide.bandwidth == 0.25);
    CHECK(wide.samples[0] == NormalizedBox{0.2, 0.4, 1.0, 2.0});
}

TEST_CASE("frame-relative scoring is invariant to the query image resolution") {
    LocationModel m;
    m.samples = {{0.25, 0.25, 0.75, 0.75}};
    const double a = location_score(m, BBox{25.0, 25.0, 75.0, 75.0}, Size{100.0, 100.0});
    const double b = location_score(m, BBox{160.0, 120.0, 480.0, 360.0}, Size{640.0, 480.0});
    CHECK(a == 1.0);
    CHECK(b == 1.0);
}

TEST_CASE("location model input validation") {
    const std::vector<std::pair<BBox, Size>> one = {{BBox{0, 0, 1, 1}, Size{2.0, 2.0}}};
    CHECK(thrown_code([] { build_location_model({}, 0.5, Size{1.0, 1.0}); }) ==
          errc::invalid_argument);
    CHECK(thrown_code([&] { build_location_model(one, 0.0, Size{1.0, 1.0}); }) ==
          errc::invalid_argument);
    CHECK(thrown_code([&] { build_location_model(one, 1.5, Size{1.0, 1.0}); }) ==
          errc::invalid_argument);
    CHECK(thrown_code([] {
              location_score(LocationModel{}, BBox{0, 0, 1, 1}, Size{1.0, 1.0});
          }) == errc::invalid_state);
}

TEST_CASE("harvest keeps confident non-overlapping detections per image") {
    // Image 0: two near-duplicates (the weaker suppressed) plus one below the
    // confidence floor. Image 1: nothing confident. Image 2: five disjoint
    // confident boxes capped at three.
    const std::vector<std::vector<BBox>> boxes = {
        {{0, 0, 10, 10}, {0, 0, 10, 9}, {20, 20, 30, 30}},
        {{0, 0, 10, 10}, {20, 0, 30, 10}},
        {{0, 0, 10, 10}, {20, 0, 30, 10}, {40, 0, 50, 10}, {60, 0, 70, 10}, {80, 0, 90, 10}},
    };
    const std::vector<std::vector<double>> probs = {
        {0.9, 0.8, 0.4},
        {0.49, 0.2},
        {0.95, 0.9, 0.85, 0.8, 0.75},
    };
    const std::vector<Size> sizes = {{40.0, 40.0}, {40.0, 20.0}, {100.0, 10.0}};

    const auto dets = harvest_scored_detections(boxes, probs, sizes, HarvestConfig{});
    REQUIRE(dets.size() == 4);
    CHECK(dets[0].first == BBox{0, 0, 10, 10});
    CHECK(dets[0].second.width == 40.0);
    CHECK(dets[0].second.height == 40.0);
    CHECK(dets[1].first == BBox{0, 0, 10, 10});
    CHECK(dets[1].second.width == 100.0);
    CHECK(dets[2].first == BBox{20, 0, 30, 10});
    CHECK(dets[3].first == BBox{40, 0, 50, 10});
}

TEST_CASE("harvest rejects mismatched per-image inputs") {
    REQUIRE_THROWS_AS(harvest_scored_detections({{BBox{0, 0, 1, 1}}}, {}, {Size{1.0, 1.0}},
                                                HarvestConfig{}),
                      error);
}

TEST_CASE("feature-driven harvest composes scoring with selection") {
    // Bias-only classifier: class 0 probability is constant and high, so the
    // harvest reduces to NMS plus the cap and must pass frame sizes through.
    Raster r;
    r.width = 8;
    r.height = 8;
    r.pixels.assign(8 * 8 * 3, 128);
    PartClassifier clf;
    clf.class_count = 2;
    clf.dims = static_cast<int>(feature_dimension());
    clf.weights.assign(2 * feature_dimension(), 0.0);
    clf.bias = {2.0, 0.0};

    ProposalSet props;
    props.boxes = {{0, 0, 4, 4}, {0, 0, 4, 3}, {4, 4, 8, 8}};

    const auto dets = harvest_location_training_samples(
        clf, 0, {&r}, {&props}, HarvestConfig{3, 0.5, 0.3});
    REQUIRE(dets.size() == 2);
    CHECK(dets[0].first == BBox{0, 0, 4, 4});
    CHECK(dets[1].first == BBox{4, 4, 8, 8});
    CHECK(dets[0].second.width == 8.0);

    REQUIRE_THROWS_AS(
        harvest_location_training_samples(clf, 2, {&r}, {&props}, HarvestConfig{}), error);
}

TEST_CASE("heatmap peaks where the samples sit") {
    LocationModel m;
    m.samples = {{0.4, 0.4, 0.6, 0.6}};
    const auto grid = location_heatmap(m, 5, 5, 0.2, 0.2);
    REQUIRE(grid.size() == 25);
    CHECK(grid[2 * 5 + 2] == 1.0);
    CHECK(grid[0] == 0.0);
    for (const double v : grid) CHECK(v <= 1.0);

    REQUIRE_THROWS_AS(location_heatmap(m, 0, 5, 0.2, 0.2), error);
    REQUIRE_THROWS_AS(location_heatmap(m, 5, 5, 0.0, 0.2), error);
}
