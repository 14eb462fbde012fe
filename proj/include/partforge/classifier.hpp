#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "partforge/common.hpp"
#include "partforge/features.hpp"

namespace partforge {

enum class StageTag : std::uint8_t { a0 = 0, a1 = 1, a2 = 2, a3 = 3, root = 4 };

struct PartClassifier {
    int class_count = 0;
    int dims = 0;
    bool has_background_class = false;
    StageTag stage_tag = StageTag::a0;
    std::vector<double> weights;  // class-major, rows of length dims
    std::vector<double> bias;     // one per class

    double logit(int cls, const FeatureVector& f) const {
        const double* w = weights.data() + static_cast<std::size_t>(cls) * dims;
        double z = bias[static_cast<std::size_t>(cls)];
        for (int i = 0; i < dims; ++i) z += w[i] * f[static_cast<std::size_t>(i)];
        return z;
    }
};

struct LabeledSample {
    FeatureVector features;
    int label = 0;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    int max_iterations = 1000;
    int batch_size = 32;
    double l2_penalty = 1e-5;
    int early_stop_patience = 5;
    std::uint64_t seed = 0;

    void validate() const {
        require(learning_rate > 0.0, errc::invalid_argument, "TrainConfig: learning_rate");
        require(max_iterations >= 1, errc::invalid_argument, "TrainConfig: max_iterations");
        require(batch_size >= 1, errc::invalid_argument, "TrainConfig: batch_size");
        require(l2_penalty >= 0.0, errc::invalid_argument, "TrainConfig: l2_penalty");
        require(early_stop_patience >= 1, errc::invalid_argument, "TrainConfig: patience");
    }
};

struct TrainLog {
    std::vector<int> eval_iterations;
    std::vector<double> eval_losses;
    int stopped_iteration = 0;
};

inline std::vector<double> score(const PartClassifier& clf, const FeatureVector& f) {
    require(static_cast<int>(f.size()) == clf.dims, errc::invalid_argument,
            "score: feature dimension mismatch");
    std::vector<double> p(static_cast<std::size_t>(clf.class_count));
    double best = -1e300;
    for (int c = 0; c < clf.class_count; ++c) {
        p[static_cast<std::size_t>(c)] = clf.logit(c, f);
        best = std::max(best, p[static_cast<std::size_t>(c)]);
    }
    double denom = 0.0;
    for (auto& v : p) denom += (v = std::exp(v - best));
    for (auto& v : p) v /= denom;
    return p;
}

// Mean cross-entropy over the samples plus an L2 term on the weights (biases
// are not penalized).
inline double classifier_loss(const PartClassifier& clf,
                              const std::vector<LabeledSample>& samples, double l2_penalty) {
    require(!samples.empty(), errc::invalid_argument, "classifier_loss: no samples");
    double total = 0.0;
    for (const auto& s : samples) {
        double best = -1e300;
        std::vector<double> z(static_cast<std::size_t>(clf.class_count));
        for (int c = 0; c < clf.class_count; ++c) {
            z[static_cast<std::size_t>(c)] = clf.logit(c, s.features);
            best = std::max(best, z[static_cast<std::size_t>(c)]);
        }
        double denom = 0.0;
        for (const double v : z) denom += std::exp(v - best);
        total += std::log(denom) + best - z[static_cast<std::size_t>(s.label)];
    }
    double reg = 0.0;
    for (const double w : clf.weights) reg += w * w;
    return total / static_cast<double>(samples.size()) + 0.5 * l2_penalty * reg;
}

namespace detail {

constexpr int kEvalInterval = 50;

// Every fifth sample is held out for early stopping. The stride keeps the
// split stable under dataset concatenation, which the duplication invariance
// test relies on.
inline bool is_holdout(std::size_t index) { return index % 5 == 4; }

}  // namespace detail

// Minibatch gradient descent on softmax cross-entropy, returning the snapshot
// with the best held-out loss. Weights start at zero unless `init` supplies a
// same-shaped classifier to continue from. With fewer than five samples
// everything trains and the final iterate is returned.
inline PartClassifier train_classifier(const std::vector<LabeledSample>& samples,
                                       const TrainConfig& cfg, TrainLog* log = nullptr,
                                       const PartClassifier* init = nullptr) {
    cfg.validate();
    require(!samples.empty(), errc::invalid_argument, "train_classifier: no samples");
    const int dims = static_cast<int>(samples.front().features.size());
    int class_count = 0;
    for (const auto& s : samples) {
        require(static_cast<int>(s.features.size()) == dims, errc::invalid_argument,
                "train_classifier: inconsistent feature dimensions");
        require(s.label >= 0, errc::invalid_argument, "train_classifier: negative label");
        class_count = std::max(class_count, s.label + 1);
    }
    std::vector<int> per_class(static_cast<std::size_t>(class_count), 0);
    for (const auto& s : samples) ++per_class[static_cast<std::size_t>(s.label)];
    for (int c = 0; c < class_count; ++c) {
        require(per_class[static_cast<std::size_t>(c)] > 0, errc::invalid_argument,
                "train_classifier: class with no samples");
    }
    require(class_count >= 2, errc::invalid_argument, "train_classifier: need two classes");

    std::vector<const LabeledSample*> train_set, holdout;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        (detail::is_holdout(i) ? holdout : train_set).push_back(&samples[i]);
    }
    if (train_set.empty() || holdout.empty()) {
        train_set.clear();
        holdout.clear();
        for (const auto& s : samples) train_set.push_back(&s);
    }

    PartClassifier clf;
    clf.class_count = class_count;
    clf.dims = dims;
    clf.weights.assign(static_cast<std::size_t>(class_count) * dims, 0.0);
    clf.bias.assign(static_cast<std::size_t>(class_count), 0.0);
    if (init != nullptr) {
        require(init->class_count == class_count && init->dims == dims,
                errc::invalid_argument, "train_classifier: warm-start shape mismatch");
        clf.weights = init->weights;
        clf.bias = init->bias;
    }

    const auto holdout_loss = [&]() {
        if (holdout.empty()) return 0.0;
        double total = 0.0;
        std::vector<double> z(static_cast<std::size_t>(class_count));
        for (const auto* s : holdout) {
            double best = -1e300;
            for (int c = 0; c < class_count; ++c) {
                z[static_cast<std::size_t>(c)] = clf.logit(c, s->features);
                best = std::max(best, z[static_cast<std::size_t>(c)]);
            }
            double denom = 0.0;
            for (const double v : z) denom += std::exp(v - best);
            total += std::log(denom) + best - z[static_cast<std::size_t>(s->label)];
        }
        return total / static_cast<double>(holdout.size());
    };

    Rng rng(cfg.seed);
    PartClassifier best_clf = clf;
    double best_loss = holdout.empty() ? 1e300 : holdout_loss();
    int since_improvement = 0;
    int iterations_run = 0;

    std::vector<double> probs(static_cast<std::size_t>(class_count));
    std::vector<double> grad_w(static_cast<std::size_t>(class_count) * dims);
    std::vector<double> grad_b(static_cast<std::size_t>(class_count));
    for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        std::fill(grad_b.begin(), grad_b.end(), 0.0);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const LabeledSample& s =
                *train_set[rng.uniform_int(static_cast<std::uint64_t>(train_set.size()))];
            double best = -1e300;
            for (int c = 0; c < class_count; ++c) {
                probs[static_cast<std::size_t>(c)] = clf.logit(c, s.features);
                best = std::max(best, probs[static_cast<std::size_t>(c)]);
            }
            double denom = 0.0;
            for (auto& v : probs) denom += (v = std::exp(v - best));
            for (int c = 0; c < class_count; ++c) {
                const double delta =
                    probs[static_cast<std::size_t>(c)] / denom - (c == s.label ? 1.0 : 0.0);
                grad_b[static_cast<std::size_t>(c)] += delta;
                double* gw = grad_w.data() + static_cast<std::size_t>(c) * dims;
                const double* f = s.features.data();
                for (int i = 0; i < dims; ++i) gw[i] += delta * f[i];
            }
        }
        const double scale = cfg.learning_rate / cfg.batch_size;
        for (std::size_t i = 0; i < clf.weights.size(); ++i) {
            clf.weights[i] -= scale * grad_w[i] + cfg.learning_rate * cfg.l2_penalty * clf.weights[i];
        }
        for (int c = 0; c < class_count; ++c) {
            clf.bias[static_cast<std::size_t>(c)] -= scale * grad_b[static_cast<std::size_t>(c)];
        }
        iterations_run = iter;

        if (!holdout.empty() && iter % detail::kEvalInterval == 0) {
            const double loss = holdout_loss();
            if (log) {
                log->eval_iterations.push_back(iter);
                log->eval_losses.push_back(loss);
            }
            if (loss < best_loss) {
                best_loss = loss;
                best_clf = clf;
                since_improvement = 0;
            } else if (++since_improvement >= cfg.early_stop_patience) {
                break;
            }
        }
    }
    if (log) log->stopped_iteration = iterations_run;
    if (holdout.empty()) return clf;
    // The final iterate wins only if it beats the best evaluated snapshot.
    return holdout_loss() < best_loss ? clf : best_clf;
}

// Analytic batch gradient, exposed for verification against finite
// differences: mean cross-entropy gradient plus the L2 term.
inline void classifier_gradient(const PartClassifier& clf,
                                const std::vector<LabeledSample>& batch, double l2_penalty,
                                std::vector<double>* grad_w, std::vector<double>* grad_b) {
    require(!batch.empty(), errc::invalid_argument, "classifier_gradient: empty batch");
    grad_w->assign(clf.weights.size(), 0.0);
    grad_b->assign(clf.bias.size(), 0.0);
    std::vector<double> probs(static_cast<std::size_t>(clf.class_count));
    for (const auto& s : batch) {
        double best = -1e300;
        for (int c = 0; c < clf.class_count; ++c) {
            probs[static_cast<std::size_t>(c)] = clf.logit(c, s.features);
            best = std::max(best, probs[static_cast<std::size_t>(c)]);
        }
        double denom = 0.0;
        for (auto& v : probs) denom += (v = std::exp(v - best));
        for (int c = 0; c < clf.class_count; ++c) {
            const double delta =
                probs[static_cast<std::size_t>(c)] / denom - (c == s.label ? 1.0 : 0.0);
            (*grad_b)[static_cast<std::size_t>(c)] += delta / batch.size();
            double* gw = grad_w->data() + static_cast<std::size_t>(c) * clf.dims;
            for (int i = 0; i < clf.dims; ++i) {
                gw[i] += delta * s.features[static_cast<std::size_t>(i)] / batch.size();
            }
        }
    }
    for (std::size_t i = 0; i < clf.weights.size(); ++i) {
        (*grad_w)[i] += l2_penalty * clf.weights[i];
    }
}

}  // namespace partforge
