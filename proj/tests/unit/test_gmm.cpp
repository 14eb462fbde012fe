#include <catch2/catch_amalgamated.hpp>

#include "partforge/gmm.hpp"

using namespace partforge;

namespace {

Mat3 random_symmetric(Rng& rng) {
    Mat3 a;
    for (int r = 0; r < 3; ++r) {
        for (int c = r; c < 3; ++c) {
            a(r, c) = rng.uniform(-2.0, 2.0);
            a(c, r) = a(r, c);
        }
    }
    return a;
}

}  // namespace

TEST_CASE("Mat3 inverse satisfies the identity") {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        Mat3 a;
        for (auto& v : a.m) v = rng.uniform(-3.0, 3.0);
        if (std::abs(a.det()) < 1e-3) continue;
        const Mat3 inv = a.inverse();
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                double v = 0.0;
                for (int k = 0; k < 3; ++k) v += a(r, k) * inv(k, c);
                REQUIRE(v == Catch::Approx(r == c ? 1.0 : 0.0).margin(1e-9));
            }
        }
    }
}

TEST_CASE("jacobi decomposition reconstructs the matrix") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const Mat3 a = random_symmetric(rng);
        Vec3 lam;
        Mat3 u;
        jacobi_eigen_sym3(a, lam, u);

        // Columns are orthonormal.
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                double dot = 0.0;
                for (int k = 0; k < 3; ++k) dot += u(k, i) * u(k, j);
                REQUIRE(dot == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-10));
            }
        }
        // A v_i = lambda_i v_i.
        for (int i = 0; i < 3; ++i) {
            const Vec3 v{u(0, i), u(1, i), u(2, i)};
            const Vec3 av = a.apply(v);
            for (int r = 0; r < 3; ++r) {
                REQUIRE(av[r] == Catch::Approx(lam[i] * v[r]).margin(1e-9));
            }
        }
    }
}

TEST_CASE("jacobi recovers known eigenvalues of a diagonal matrix") {
    Mat3 a;
    a(0, 0) = 3.0;
    a(1, 1) = -1.0;
    a(2, 2) = 0.5;
    Vec3 lam;
    Mat3 u;
    jacobi_eigen_sym3(a, lam, u);
    std::vector<double> got{lam.x, lam.y, lam.z};
    std::sort(got.begin(), got.end());
    REQUIRE(got[0] == Catch::Approx(-1.0).margin(1e-12));
    REQUIRE(got[1] == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(got[2] == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("eigenvalue floor lifts only the small directions") {
    Mat3 a;
    a(0, 0) = 2.0;
    a(1, 1) = 1e-9;
    a(2, 2) = 0.5;
    const Mat3 floored = floor_eigenvalues(a, 1e-4);
    Vec3 lam;
    Mat3 u;
    jacobi_eigen_sym3(floored, lam, u);
    std::vector<double> got{lam.x, lam.y, lam.z};
    std::sort(got.begin(), got.end());
    REQUIRE(got[0] == Catch::Approx(1e-4).margin(1e-12));
    REQUIRE(got[1] == Catch::Approx(0.5).margin(1e-10));
    REQUIRE(got[2] == Catch::Approx(2.0).margin(1e-10));
}

TEST_CASE("single gaussian log density matches the closed form") {
    Gaussian3 g;
    g.weight = 1.0;
    g.mean = {0.2, 0.4, 0.6};
    g.cov = Mat3::identity(0.25);
    g.refresh();
    const Vec3 x{0.5, 0.1, 0.6};
    const double dist2 = (sq(0.3) + sq(0.3)) / 0.25;
    const double expected =
        -0.5 * (3.0 * std::log(2.0 * 3.141592653589793) + 3.0 * std::log(0.25)) - 0.5 * dist2;
    REQUIRE(g.log_density(x) == Catch::Approx(expected).margin(1e-12));

    Gmm model;
    model.components = {g};
    REQUIRE(model.log_density(x) == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("mixture log density uses log-sum-exp over components") {
    Gaussian3 a;
    a.weight = 0.25;
    a.mean = {0, 0, 0};
    a.cov = Mat3::identity(1.0);
    a.refresh();
    Gaussian3 b = a;
    b.weight = 0.75;
    b.mean = {1, 0, 0};
    b.refresh();
    Gmm model;
    model.components = {a, b};
    const Vec3 x{0.3, 0.0, 0.0};
    const double direct =
        std::log(0.25 * std::exp(a.log_density(x)) + 0.75 * std::exp(b.log_density(x)));
    REQUIRE(model.log_density(x) == Catch::Approx(direct).margin(1e-12));
}

TEST_CASE("EM log-likelihood is non-decreasing") {
    Rng rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Vec3> points;
        const int n = 120;
        for (int i = 0; i < n; ++i) {
            const Vec3 center = (i % 3 == 0)   ? Vec3{0.2, 0.2, 0.2}
                                : (i % 3 == 1) ? Vec3{0.8, 0.3, 0.5}
                                               : Vec3{0.5, 0.9, 0.1};
            points.push_back(center + Vec3{rng.normal(), rng.normal(), rng.normal()} * 0.05);
        }
        GmmConfig cfg;
        cfg.components = 4;
        cfg.max_iterations = 40;
        std::vector<double> trace;
        Gmm::fit(points, cfg, rng, &trace);
        REQUIRE(trace.size() >= 2);
        for (std::size_t i = 1; i < trace.size(); ++i) {
            REQUIRE(trace[i] >= trace[i - 1] - 1e-9);
        }
    }
}

TEST_CASE("EM separates two well-spaced clusters") {
    Rng rng(44);
    std::vector<Vec3> points;
    for (int i = 0; i < 200; ++i) {
        const Vec3 center = i < 100 ? Vec3{0.1, 0.1, 0.1} : Vec3{0.9, 0.9, 0.9};
        points.push_back(center + Vec3{rng.normal(), rng.normal(), rng.normal()} * 0.02);
    }
    GmmConfig cfg;
    cfg.components = 2;
    cfg.max_iterations = 50;
    const Gmm model = Gmm::fit(points, cfg, rng);
    REQUIRE(model.components.size() == 2);
    std::vector<Vec3> means;
    for (const auto& g : model.components) {
        means.push_back(g.mean);
        REQUIRE(g.weight == Catch::Approx(0.5).margin(0.05));
    }
    std::sort(means.begin(), means.end(), [](const Vec3& a, const Vec3& b) { return a.x < b.x; });
    REQUIRE(means[0].x == Catch::Approx(0.1).margin(0.02));
    REQUIRE(means[1].x == Catch::Approx(0.9).margin(0.02));
}

TEST_CASE("degenerate data hits the covariance floor and stays finite") {
    std::vector<Vec3> points(50, Vec3{0.5, 0.5, 0.5});
    GmmConfig cfg;
    cfg.components = 3;
    Rng rng(45);
    const Gmm model = Gmm::fit(points, cfg, rng);
    const double ll = model.log_density({0.5, 0.5, 0.5});
    REQUIRE(std::isfinite(ll));
    const double far = model.log_density({1.0, 0.0, 1.0});
    REQUIRE(std::isfinite(far));
    REQUIRE(far < ll);
}

TEST_CASE("single component fit recovers the sample moments") {
    Rng rng(46);
    std::vector<Vec3> points;
    for (int i = 0; i < 500; ++i) {
        points.push_back({0.4 + 0.1 * rng.normal(), 0.5 + 0.2 * rng.normal(),
                          0.6 + 0.05 * rng.normal()});
    }
    Vec3 mean{};
    for (const auto& p : points) mean = mean + p;
    mean = mean * (1.0 / points.size());

    GmmConfig cfg;
    cfg.components = 1;
    cfg.max_iterations = 5;
    const Gmm model = Gmm::fit(points, cfg, rng);
    REQUIRE(model.components[0].mean.x == Catch::Approx(mean.x).margin(1e-9));
    REQUIRE(model.components[0].mean.y == Catch::Approx(mean.y).margin(1e-9));
    REQUIRE(model.components[0].mean.z == Catch::Approx(mean.z).margin(1e-9));
    REQUIRE(model.components[0].weight == 1.0);
}
