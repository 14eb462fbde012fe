#pragma once

#include <cstdint>
#include <queue>
#include <vector>

#include "partforge/common.hpp"

namespace partforge {

// Pairwise binary labeling energy with nonnegative interaction weights:
//   E(l) = sum_i cost[l_i](i) + sum_{(a,b)} weight * [l_a != l_b]
// Unary costs may be negative; interactions must not be, which keeps the
// energy submodular and exactly minimizable by a minimum cut.
struct BinaryEnergy {
    struct Interaction {
        int a = 0;
        int b = 0;
        double weight = 0.0;
    };

    int node_count = 0;
    std::vector<double> cost0;
    std::vector<double> cost1;
    std::vector<Interaction> interactions;

    double value(const std::vector<int>& labels) const {
        require(static_cast<int>(labels.size()) == node_count, errc::invalid_argument,
                "BinaryEnergy::value: label count mismatch");
        double total = 0.0;
        for (int i = 0; i < node_count; ++i) {
            total += labels[i] ? cost1[i] : cost0[i];
        }
        for (const auto& p : interactions) {
            if (labels[p.a] != labels[p.b]) total += p.weight;
        }
        return total;
    }
};

// Max-flow on a directed graph with an implicit source/sink pair (Dinic).
// Nodes are 0..n-1; capacities are doubles with a small residual threshold.
class MaxFlow {
public:
    explicit MaxFlow(int node_count)
        : n_(node_count), head_(static_cast<std::size_t>(node_count) + 2, -1) {
        require(node_count >= 0, errc::invalid_argument, "MaxFlow: negative node count");
    }

    int source() const { return n_; }
    int sink() const { return n_ + 1; }

    void add_edge(int a, int b, double cap_ab, double cap_ba) {
        require(a != b, errc::invalid_argument, "MaxFlow: self loop");
        require(cap_ab >= 0.0 && cap_ba >= 0.0, errc::invalid_argument,
                "MaxFlow: negative capacity");
        push_arc(a, b, cap_ab);
        push_arc(b, a, cap_ba);
    }

    void add_terminal(int node, double cap_from_source, double cap_to_sink) {
        require(cap_from_source >= 0.0 && cap_to_sink >= 0.0, errc::invalid_argument,
                "MaxFlow: negative terminal capacity");
        if (cap_from_source > 0.0) add_edge(source(), node, cap_from_source, 0.0);
        if (cap_to_sink > 0.0) add_edge(node, sink(), cap_to_sink, 0.0);
    }

    double solve() {
        double flow = 0.0;
        while (build_levels()) {
            iter_ = head_;
            while (true) {
                const double pushed = augment(source(), kInf);
                if (pushed <= 0.0) break;
                flow += pushed;
            }
        }
        solved_ = true;
        return flow;
    }

    // Nodes reachable from the source in the residual graph. For the energy
    // construction below, source side means label 1.
    std::vector<bool> source_side() const {
        require(solved_, errc::invalid_state, "MaxFlow: solve before querying the cut");
        std::vector<bool> reach(static_cast<std::size_t>(n_) + 2, false);
        std::queue<int> queue;
        reach[static_cast<std::size_t>(source())] = true;
        queue.push(source());
        while (!queue.empty()) {
            const int v = queue.front();
            queue.pop();
            for (int e = head_[static_cast<std::size_t>(v)]; e >= 0; e = arcs_[e].next) {
                if (arcs_[e].cap > kResidualEps && !reach[static_cast<std::size_t>(arcs_[e].to)]) {
                    reach[static_cast<std::size_t>(arcs_[e].to)] = true;
                    queue.push(arcs_[e].to);
                }
            }
        }
        return reach;
    }

private:
    static constexpr double kInf = 1e300;
    static constexpr double kResidualEps = 1e-11;

    struct Arc {
        int to = 0;
        int next = -1;
        double cap = 0.0;
    };

    void push_arc(int a, int b, double cap) {
        require(a >= 0 && a < n_ + 2 && b >= 0 && b < n_ + 2, errc::invalid_argument,
                "MaxFlow: node out of range");
        arcs_.push_back({b, head_[static_cast<std::size_t>(a)], cap});
        head_[static_cast<std::size_t>(a)] = static_cast<int>(arcs_.size()) - 1;
    }

    bool build_levels() {
        level_.assign(static_cast<std::size_t>(n_) + 2, -1);
        std::queue<int> queue;
        level_[static_cast<std::size_t>(source())] = 0;
        queue.push(source());
        while (!queue.empty()) {
            const int v = queue.front();
            queue.pop();
            for (int e = head_[static_cast<std::size_t>(v)]; e >= 0; e = arcs_[e].next) {
                const int to = arcs_[e].to;
                if (arcs_[e].cap > kResidualEps && level_[static_cast<std::size_t>(to)] < 0) {
                    level_[static_cast<std::size_t>(to)] = level_[static_cast<std::size_t>(v)] + 1;
                    queue.push(to);
                }
            }
        }
        return level_[static_cast<std::size_t>(sink())] >= 0;
    }

    double augment(int v, double limit) {
        if (v == sink()) return limit;
        for (int& e = iter_[static_cast<std::size_t>(v)]; e >= 0; e = arcs_[e].next) {
            Arc& arc = arcs_[e];
            if (arc.cap <= kResidualEps ||
                level_[static_cast<std::size_t>(arc.to)] !=
                    level_[static_cast<std::size_t>(v)] + 1) {
                continue;
            }
            const double pushed = augment(arc.to, std::min(limit, arc.cap));
            if (pushed > 0.0) {
                arc.cap -= pushed;
                arcs_[static_cast<std::size_t>(e ^ 1)].cap += pushed;
                return pushed;
            }
        }
        return 0.0;
    }

    int n_ = 0;
    bool solved_ = false;
    std::vector<Arc> arcs_;
    std::vector<int> head_;
    std::vector<int> iter_;
    std::vector<int> level_;
};

// Exact global minimizer of a BinaryEnergy. Unary costs are shifted per node
// so all capacities are nonnegative; the shift cancels in the argmin.
inline std::vector<int> min_cut_labeling(const BinaryEnergy& energy) {
    require(static_cast<int>(energy.cost0.size()) == energy.node_count &&
                static_cast<int>(energy.cost1.size()) == energy.node_count,
            errc::invalid_argument, "min_cut_labeling: cost size mismatch");
    MaxFlow flow(energy.node_count);
    for (int i = 0; i < energy.node_count; ++i) {
        const double base = std::min(energy.cost0[i], energy.cost1[i]);
        flow.add_terminal(i, energy.cost0[i] - base, energy.cost1[i] - base);
    }
    for (const auto& p : energy.interactions) {
        require(p.a >= 0 && p.a < energy.node_count && p.b >= 0 && p.b < energy.node_count,
                errc::invalid_argument, "min_cut_labeling: interaction node out of range");
        require(p.weight >= 0.0, errc::invalid_argument,
                "min_cut_labeling: negative interaction weight");
        if (p.weight > 0.0) flow.add_edge(p.a, p.b, p.weight, p.weight);
    }
    flow.solve();
    const std::vector<bool> side = flow.source_side();
    std::vector<int> labels(static_cast<std::size_t>(energy.node_count));
    for (int i = 0; i < energy.node_count; ++i) {
        labels[static_cast<std::size_t>(i)] = side[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    return labels;
}

}  // namespace partforge
