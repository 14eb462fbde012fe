#include <catch2/catch_amalgamated.hpp>

#include "partforge/maxflow.hpp"

using namespace partforge;

namespace {

double brute_force_min(const BinaryEnergy& e, std::vector<int>* best_out = nullptr) {
    double best = 1e300;
    std::vector<int> labels(static_cast<std::size_t>(e.node_count));
    for (std::uint32_t mask = 0; mask < (1u << e.node_count); ++mask) {
        for (int i = 0; i < e.node_count; ++i) labels[static_cast<std::size_t>(i)] = (mask >> i) & 1;
        const double v = e.value(labels);
        if (v < best) {
            best = v;
            if (best_out) *best_out = labels;
        }
    }
    return best;
}

BinaryEnergy random_energy(Rng& rng, int n, bool grid_pairs) {
    BinaryEnergy e;
    e.node_count = n;
    e.cost0.resize(static_cast<std::size_t>(n));
    e.cost1.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        e.cost0[static_cast<std::size_t>(i)] = rng.uniform(-5.0, 5.0);
        e.cost1[static_cast<std::size_t>(i)] = rng.uniform(-5.0, 5.0);
    }
    if (grid_pairs) {
        // 4-connected chain plus a few extras, like a tiny image grid.
        for (int i = 0; i + 1 < n; ++i) {
            e.interactions.push_back({i, i + 1, rng.uniform(0.0, 3.0)});
        }
    }
    const int extra = rng.uniform_int(0, n);
    for (int k = 0; k < extra; ++k) {
        const int a = rng.uniform_int(n);
        const int b = rng.uniform_int(n);
        if (a != b) e.interactions.push_back({a, b, rng.uniform(0.0, 3.0)});
    }
    return e;
}

}  // namespace

TEST_CASE("min cut solves a hand-checked two-node instance") {
    BinaryEnergy e;
    e.node_count = 2;
    e.cost0 = {0.0, 10.0};
    e.cost1 = {10.0, 0.0};
    e.interactions = {{0, 1, 3.0}};
    const auto labels = min_cut_labeling(e);
    REQUIRE(labels == std::vector<int>{0, 1});
    REQUIRE(e.value(labels) == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("strong coupling forces agreement") {
    BinaryEnergy e;
    e.node_count = 2;
    e.cost0 = {0.0, 10.0};
    e.cost1 = {10.0, 0.0};
    e.interactions = {{0, 1, 100.0}};
    const auto labels = min_cut_labeling(e);
    REQUIRE(labels[0] == labels[1]);
    REQUIRE(e.value(labels) == Catch::Approx(10.0).margin(1e-12));
}

TEST_CASE("min cut matches exhaustive enumeration on random instances") {
    Rng rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = rng.uniform_int(1, 12);
        const BinaryEnergy e = random_energy(rng, n, trial % 2 == 0);
        const double oracle = brute_force_min(e);
        const auto labels = min_cut_labeling(e);
        REQUIRE(e.value(labels) == Catch::Approx(oracle).margin(1e-9));
    }
}

TEST_CASE("negative unary costs are handled") {
    BinaryEnergy e;
    e.node_count = 3;
    e.cost0 = {-4.0, -1.0, 2.0};
    e.cost1 = {-6.0, 0.0, -3.0};
    e.interactions = {{0, 1, 1.5}, {1, 2, 1.5}};
    const double oracle = brute_force_min(e);
    const auto labels = min_cut_labeling(e);
    REQUIRE(e.value(labels) == Catch::Approx(oracle).margin(1e-12));
    REQUIRE(oracle < 0.0);
}

TEST_CASE("all-equal optimum has zero interaction cost") {
    BinaryEnergy e;
    e.node_count = 4;
    e.cost0 = {1.0, 1.0, 1.0, 1.0};
    e.cost1 = {0.0, 0.0, 0.0, 0.0};
    for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) e.interactions.push_back({i, j, 10.0});
    }
    const auto labels = min_cut_labeling(e);
    REQUIRE(labels == std::vector<int>{1, 1, 1, 1});
}

TEST_CASE("raw max-flow value equals classic small network answer") {
    // Two disjoint augmenting paths of widths 2 and 3 plus a cross edge.
    MaxFlow f(2);
    f.add_edge(f.source(), 0, 2.0, 0.0);
    f.add_edge(f.source(), 1, 3.0, 0.0);
    f.add_edge(0, f.sink(), 3.0, 0.0);
    f.add_edge(1, f.sink(), 2.0, 0.0);
    f.add_edge(1, 0, 1.0, 0.0);
    REQUIRE(f.solve() == Catch::Approx(5.0).margin(1e-12));
}

TEST_CASE("interaction weights must be nonnegative") {
    BinaryEnergy e;
    e.node_count = 2;
    e.cost0 = {0.0, 0.0};
    e.cost1 = {0.0, 0.0};
    e.interactions = {{0, 1, -1.0}};
    REQUIRE_THROWS_AS(min_cut_labeling(e), error);
}
