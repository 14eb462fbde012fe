#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "partforge/common.hpp"

namespace partforge {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm2() const { return dot(*this); }
};

struct Mat3 {
    // Row-major.
    std::array<double, 9> m{};

    double& operator()(int r, int c) { return m[static_cast<std::size_t>(r) * 3 + c]; }
    double operator()(int r, int c) const { return m[static_cast<std::size_t>(r) * 3 + c]; }

    static Mat3 identity(double s = 1.0) {
        Mat3 out;
        out(0, 0) = out(1, 1) = out(2, 2) = s;
        return out;
    }

    Vec3 apply(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    Mat3 inverse() const {
        const double d = det();
        require(std::abs(d) > 1e-300, errc::invalid_state, "Mat3: singular matrix");
        Mat3 out;
        out(0, 0) = (m[4] * m[8] - m[5] * m[7]) / d;
        out(0, 1) = (m[2] * m[7] - m[1] * m[8]) / d;
        out(0, 2) = (m[1] * m[5] - m[2] * m[4]) / d;
        out(1, 0) = (m[5] * m[6] - m[3] * m[8]) / d;
        out(1, 1) = (m[0] * m[8] - m[2] * m[6]) / d;
        out(1, 2) = (m[2] * m[3] - m[0] * m[5]) / d;
        out(2, 0) = (m[3] * m[7] - m[4] * m[6]) / d;
        out(2, 1) = (m[1] * m[6] - m[0] * m[7]) / d;
        out(2, 2) = (m[0] * m[4] - m[1] * m[3]) / d;
        return out;
    }
};

// Eigen-decomposition of a symmetric 3x3 by cyclic Jacobi rotations.
// Returns eigenvalues (unordered) and the matching orthonormal columns of U.
inline void jacobi_eigen_sym3(const Mat3& a, Vec3& eigenvalues, Mat3& eigenvectors) {
    Mat3 d = a;
    Mat3 u = Mat3::identity();
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = sq(d(0, 1)) + sq(d(0, 2)) + sq(d(1, 2));
        if (off < 1e-26) break;
        for (int p = 0; p < 3; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(d(p, q)) < 1e-300) continue;
                const double theta = (d(q, q) - d(p, p)) / (2.0 * d(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double dkp = d(k, p), dkq = d(k, q);
                    d(k, p) = c * dkp - s * dkq;
                    d(k, q) = s * dkp + c * dkq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double dpk = d(p, k), dqk = d(q, k);
                    d(p, k) = c * dpk - s * dqk;
                    d(q, k) = s * dpk + c * dqk;
                }
                for (int k = 0; k < 3; ++k) {
                    const double ukp = u(k, p), ukq = u(k, q);
                    u(k, p) = c * ukp - s * ukq;
                    u(k, q) = s * ukp + c * ukq;
                }
            }
        }
    }
    eigenvalues = {d(0, 0), d(1, 1), d(2, 2)};
    eigenvectors = u;
}

// Nearest feasible covariance: clamp eigenvalues of a symmetric matrix from
// below, which is also the constrained maximizer of the Gaussian M-step.
inline Mat3 floor_eigenvalues(const Mat3& cov, double floor_value) {
    Vec3 lam;
    Mat3 u;
    jacobi_eigen_sym3(cov, lam, u);
    for (int i = 0; i < 3; ++i) lam[i] = std::max(lam[i], floor_value);
    Mat3 out;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            double v = 0.0;
            for (int k = 0; k < 3; ++k) v += u(r, k) * lam[k] * u(c, k);
            out(r, c) = v;
        }
    }
    // Symmetrize away rotation round-off.
    for (int r = 0; r < 3; ++r) {
        for (int c = r + 1; c < 3; ++c) {
            const double v = 0.5 * (out(r, c) + out(c, r));
            out(r, c) = v;
            out(c, r) = v;
        }
    }
    return out;
}

struct Gaussian3 {
    double weight = 0.0;
    Vec3 mean;
    Mat3 cov;

    // Derived quantities, refreshed after any parameter change.
    Mat3 cov_inv;
    double log_norm = 0.0;  // log of the density normalizer

    void refresh() {
        const double d = cov.det();
        require(d > 0.0, errc::invalid_state, "Gaussian3: covariance not positive definite");
        cov_inv = cov.inverse();
        log_norm = -0.5 * (3.0 * std::log(2.0 * 3.141592653589793238462643383279502884) +
                           std::log(d));
    }

    double log_density(const Vec3& x) const {
        const Vec3 d = x - mean;
        return log_norm - 0.5 * d.dot(cov_inv.apply(d));
    }
};

struct GmmConfig {
    int components = 5;
    int max_iterations = 30;
    // Covariances are constrained to be at least floor*I. Clamping the scatter
    // eigenvalues is the exact M-step maximizer under that constraint, which
    // is what keeps the likelihood ascent intact; an unconditional +floor*I
    // would not be.
    double covariance_floor = 1e-4;
    double tolerance = 1e-7;  // stop when mean LL improves less than this
};

class Gmm {
public:
    std::vector<Gaussian3> components;

    bool empty() const { return components.empty(); }

    double log_density(const Vec3& x) const {
        double best = -1e300;
        double rest = 0.0;
        // log-sum-exp over components; zero-weight components contribute nothing
        for (const auto& g : components) {
            if (g.weight <= 0.0) continue;
            const double term = std::log(g.weight) + g.log_density(x);
            if (term > best) {
                rest = rest * std::exp(best - term) + 1.0;
                best = term;
            } else {
                rest += std::exp(term - best);
            }
        }
        if (best == -1e300) return -1e300;
        return best + std::log(rest);
    }

    double mean_log_likelihood(const std::vector<Vec3>& points) const {
        require(!points.empty(), errc::invalid_argument, "Gmm: no points");
        double total = 0.0;
        for (const auto& p : points) total += log_density(p);
        return total / static_cast<double>(points.size());
    }

    static Gmm fit(const std::vector<Vec3>& points, const GmmConfig& cfg, Rng& rng,
                   std::vector<double>* ll_trace = nullptr) {
        require(!points.empty(), errc::invalid_argument, "Gmm::fit: no points");
        require(cfg.components >= 1 && cfg.components <= 64, errc::invalid_argument,
                "Gmm::fit: component count out of range");
        const int n = static_cast<int>(points.size());
        const int k = std::min(cfg.components, n);

        Gmm model;
        model.components.resize(static_cast<std::size_t>(k));
        const Mat3 start_cov = initial_covariance(points, cfg);
        // Farthest-point seeding: first mean random, the rest maximally spread,
        // so well-separated clusters each receive a seed.
        std::vector<Vec3> seeds;
        seeds.push_back(points[rng.uniform_int(static_cast<std::uint64_t>(n))]);
        std::vector<double> dist2(static_cast<std::size_t>(n), 0.0);
        while (static_cast<int>(seeds.size()) < k) {
            int best = 0;
            double best_d = -1.0;
            for (int i = 0; i < n; ++i) {
                const double d = (points[static_cast<std::size_t>(i)] - seeds.back()).norm2();
                auto& cur = dist2[static_cast<std::size_t>(i)];
                cur = seeds.size() == 1 ? d : std::min(cur, d);
                if (cur > best_d) {
                    best_d = cur;
                    best = i;
                }
            }
            seeds.push_back(points[static_cast<std::size_t>(best)]);
        }
        for (int j = 0; j < k; ++j) {
            auto& g = model.components[static_cast<std::size_t>(j)];
            g.weight = 1.0 / k;
            g.mean = seeds[static_cast<std::size_t>(j)];
            g.cov = start_cov;
            g.refresh();
        }

        std::vector<double> resp(static_cast<std::size_t>(n) * k);
        double prev_ll = -1e300;
        for (int iter = 0; iter < cfg.max_iterations; ++iter) {
            // E-step, accumulating the data log-likelihood as a byproduct.
            double ll = 0.0;
            for (int i = 0; i < n; ++i) {
                double best = -1e300;
                std::array<double, 64> terms;
                for (int j = 0; j < k; ++j) {
                    const auto& g = model.components[static_cast<std::size_t>(j)];
                    const double t = g.weight > 0.0
                                         ? std::log(g.weight) + g.log_density(points[i])
                                         : -1e300;
                    terms[static_cast<std::size_t>(j)] = t;
                    best = std::max(best, t);
                }
                double denom = 0.0;
                for (int j = 0; j < k; ++j) {
                    denom += std::exp(terms[static_cast<std::size_t>(j)] - best);
                }
                ll += best + std::log(denom);
                for (int j = 0; j < k; ++j) {
                    resp[static_cast<std::size_t>(i) * k + j] =
                        std::exp(terms[static_cast<std::size_t>(j)] - best) / denom;
                }
            }
            ll /= n;
            if (ll_trace) ll_trace->push_back(ll);
            if (ll - prev_ll < cfg.tolerance && iter > 0) break;
            prev_ll = ll;

            // M-step. A starved component keeps its shape but its weight drops
            // to its (near-zero) mass, so it cannot degrade the likelihood.
            for (int j = 0; j < k; ++j) {
                double mass = 0.0;
                Vec3 mean{};
                for (int i = 0; i < n; ++i) {
                    const double r = resp[static_cast<std::size_t>(i) * k + j];
                    mass += r;
                    mean = mean + points[i] * r;
                }
                auto& g = model.components[static_cast<std::size_t>(j)];
                g.weight = mass / n;
                if (mass < 1e-10) continue;
                g.mean = mean * (1.0 / mass);
                Mat3 scatter;
                for (int i = 0; i < n; ++i) {
                    const double r = resp[static_cast<std::size_t>(i) * k + j];
                    if (r == 0.0) continue;
                    const Vec3 d = points[i] - g.mean;
                    for (int a = 0; a < 3; ++a) {
                        for (int b = 0; b < 3; ++b) scatter(a, b) += r * d[a] * d[b];
                    }
                }
                for (auto& v : scatter.m) v /= mass;
                g.cov = floor_eigenvalues(scatter, cfg.covariance_floor);
                g.refresh();
            }
            normalize_weights(model);
        }
        return model;
    }

private:
    static Mat3 initial_covariance(const std::vector<Vec3>& points, const GmmConfig& cfg) {
        Vec3 mean{};
        for (const auto& p : points) mean = mean + p;
        mean = mean * (1.0 / static_cast<double>(points.size()));
        Mat3 scatter;
        for (const auto& p : points) {
            const Vec3 d = p - mean;
            for (int a = 0; a < 3; ++a) {
                for (int b = 0; b < 3; ++b) scatter(a, b) += d[a] * d[b];
            }
        }
        for (auto& v : scatter.m) v /= static_cast<double>(points.size());
        return floor_eigenvalues(scatter, cfg.covariance_floor);
    }

    static void normalize_weights(Gmm& model) {
        double total = 0.0;
        for (const auto& g : model.components) total += g.weight;
        require(total > 0.0, errc::invalid_state, "Gmm: all component weights vanished");
        for (auto& g : model.components) g.weight /= total;
    }
};

}  // namespace partforge
