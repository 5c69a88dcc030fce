#pragma once

// Shared test oracles. Everything here is written independently of the
// library code under test: brute-force search, finite differences, and
// exhaustive enumeration, kept deliberately naive.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "hardtsp/rng.hpp"
#include "hardtsp/tsp.hpp"

namespace testsupport {

/// Tour length computed with no shared code: plain loop over hypot.
inline double naive_tour_cost(const hardtsp::TspInstance& inst, const std::vector<int>& order) {
    double total = 0.0;
    int n = static_cast<int>(order.size());
    for (int i = 0; i < n; ++i) {
        const auto& a = inst.nodes[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        const auto& b = inst.nodes[static_cast<std::size_t>(order[static_cast<std::size_t>((i + 1) % n)])];
        total += std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y));
    }
    return total;
}

/// Exhaustive optimum over all permutations with node 0 fixed first.
inline double brute_force_optimum(const hardtsp::TspInstance& inst) {
    int n = inst.n();
    if (n > 10) throw std::runtime_error("brute force capped at 10 nodes");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    if (n <= 2) return naive_tour_cost(inst, order);
    double best = naive_tour_cost(inst, order);
    while (std::next_permutation(order.begin() + 1, order.end()))
        best = std::min(best, naive_tour_cost(inst, order));
    return best;
}

inline hardtsp::TspInstance random_instance(int n, hardtsp::Rng& rng) {
    hardtsp::TspInstance inst;
    inst.nodes.resize(static_cast<std::size_t>(n));
    for (auto& p : inst.nodes) {
        p.x = rng.uniform();
        p.y = rng.uniform();
    }
    return inst;
}

/// Central finite difference of f over every coordinate of the instance.
inline std::vector<hardtsp::Point> fd_coordinate_gradient(
    const hardtsp::TspInstance& inst,
    const std::function<double(const hardtsp::TspInstance&)>& f,
    double h = 1e-6) {
    std::vector<hardtsp::Point> grad(inst.nodes.size());
    for (std::size_t i = 0; i < inst.nodes.size(); ++i) {
        for (int dim = 0; dim < 2; ++dim) {
            hardtsp::TspInstance lo = inst;
            hardtsp::TspInstance hi = inst;
            double& lv = dim == 0 ? lo.nodes[i].x : lo.nodes[i].y;
            double& hv = dim == 0 ? hi.nodes[i].x : hi.nodes[i].y;
            lv -= h;
            hv += h;
            double d = (f(hi) - f(lo)) / (2.0 * h);
            (dim == 0 ? grad[i].x : grad[i].y) = d;
        }
    }
    return grad;
}

} // namespace testsupport
