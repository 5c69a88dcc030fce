#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "hardtsp/errors.hpp"
#include "hardtsp/rng.hpp"
#include "hardtsp/tsp.hpp"

namespace hardtsp {

struct Solution {
    Tour tour;
    double cost = 0.0;
};

/// Largest instance the exact solver accepts. The dynamic program holds
/// (n-1) * 2^(n-1) doubles, about 80 MB at the limit.
inline constexpr int kExactNodeLimit = 20;

inline std::vector<double> distance_matrix(const TspInstance& instance) {
    int n = instance.n();
    std::vector<double> d(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double v = euclidean(instance.nodes[static_cast<std::size_t>(i)],
                                 instance.nodes[static_cast<std::size_t>(j)]);
            d[static_cast<std::size_t>(i) * n + j] = v;
            d[static_cast<std::size_t>(j) * n + i] = v;
        }
    return d;
}

/// Exact optimum by Held-Karp dynamic programming, O(n^2 2^n).
///
/// State: cheapest path from node 0 through subset S of the remaining nodes,
/// ending at k in S. The tour is recovered by walking the table backwards, so
/// no parent array is stored. Throws SizeLimitError above kExactNodeLimit.
inline Solution solve_exact(const TspInstance& instance) {
    int n = instance.n();
    if (n > kExactNodeLimit)
        throw SizeLimitError("exact solver limited to " + std::to_string(kExactNodeLimit) +
                             " nodes, got " + std::to_string(n));
    Solution s;
    if (n == 0) return s;
    s.tour.order.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) s.tour.order[static_cast<std::size_t>(i)] = i;
    if (n <= 2) {
        s.cost = tour_cost(instance, s.tour);
        return s;
    }

    const std::vector<double> dist = distance_matrix(instance);
    const int m = n - 1; // nodes 1..n-1, bit j stands for node j+1
    const auto row = [&](int node) { return dist.data() + static_cast<std::size_t>(node) * n; };
    const double inf = std::numeric_limits<double>::infinity();
    const std::size_t subsets = std::size_t{1} << m;
    std::vector<double> dp(subsets * static_cast<std::size_t>(m), inf);

    for (int k = 0; k < m; ++k)
        dp[(std::size_t{1} << k) * m + static_cast<std::size_t>(k)] = row(0)[k + 1];

    for (std::size_t set = 1; set < subsets; ++set) {
        if ((set & (set - 1)) == 0) continue; // singletons are seeded above
        double* cur = dp.data() + set * m;
        for (std::uint64_t rest = set; rest != 0; rest &= rest - 1) {
            int k = std::countr_zero(rest);
            std::size_t without = set ^ (std::size_t{1} << k);
            const double* prev = dp.data() + without * m;
            const double* dk = row(k + 1) + 1; // dk[j] = distance(node j+1, node k+1)
            double best = inf;
            for (std::uint64_t others = without; others != 0; others &= others - 1) {
                int j = std::countr_zero(others);
                double cand = prev[j] + dk[j];
                if (cand < best) best = cand;
            }
            cur[k] = best;
        }
    }

    const std::size_t full = subsets - 1;
    double best_cost = inf;
    int best_end = 0;
    for (int k = 0; k < m; ++k) {
        double cand = dp[full * m + static_cast<std::size_t>(k)] + row(0)[k + 1];
        if (cand < best_cost) {
            best_cost = cand;
            best_end = k;
        }
    }

    // Backtrack: find the predecessor that reproduces each dp value exactly.
    std::vector<int> reversed;
    reversed.reserve(static_cast<std::size_t>(m));
    std::size_t set = full;
    int end = best_end;
    while (true) {
        reversed.push_back(end + 1);
        std::size_t without = set ^ (std::size_t{1} << end);
        if (without == 0) break;
        double target = dp[set * m + static_cast<std::size_t>(end)];
        const double* prev = dp.data() + without * m;
        const double* dk = row(end + 1) + 1;
        int next_end = -1;
        for (std::uint64_t others = without; others != 0; others &= others - 1) {
            int j = std::countr_zero(others);
            if (prev[j] + dk[j] == target) {
                next_end = j;
                break;
            }
        }
        if (next_end < 0) {
            // Floating-point re-association cannot happen (same expressions),
            // but fall back to the argmin rather than fail.
            double best = inf;
            for (std::uint64_t others = without; others != 0; others &= others - 1) {
                int j = std::countr_zero(others);
                if (prev[j] + dk[j] < best) {
                    best = prev[j] + dk[j];
                    next_end = j;
                }
            }
        }
        set = without;
        end = next_end;
    }

    s.tour.order.clear();
    s.tour.order.push_back(0);
    for (auto it = reversed.rbegin(); it != reversed.rend(); ++it) s.tour.order.push_back(*it);
    s.cost = best_cost;
    return s;
}

/// Nearest-neighbor tour from a given start node; ties pick the lower index.
inline Tour nearest_neighbor_tour(const TspInstance& instance, const std::vector<double>& dist, int start) {
    int n = instance.n();
    Tour t;
    t.order.reserve(static_cast<std::size_t>(n));
    std::vector<char> visited(static_cast<std::size_t>(n), 0);
    int cur = start;
    t.order.push_back(cur);
    visited[static_cast<std::size_t>(cur)] = 1;
    for (int step = 1; step < n; ++step) {
        const double* drow = dist.data() + static_cast<std::size_t>(cur) * n;
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (visited[static_cast<std::size_t>(j)]) continue;
            if (drow[j] < best_d) {
                best_d = drow[j];
                best = j;
            }
        }
        cur = best;
        t.order.push_back(cur);
        visited[static_cast<std::size_t>(cur)] = 1;
    }
    return t;
}

/// Heuristic solution: nearest-neighbor construction from a seed-controlled
/// start node, then first-improvement 2-opt until no move improves.
///
/// The result is 2-opt locally optimal: no segment reversal shortens it.
inline Solution solve_heuristic(const TspInstance& instance, Rng rng) {
    int n = instance.n();
    Solution s;
    if (n == 0) return s;
    const std::vector<double> dist = distance_matrix(instance);
    int start = rng.uniform_int(0, n - 1);
    s.tour = nearest_neighbor_tour(instance, dist, start);
    if (n >= 4) {
        auto d = [&](int a, int b) { return dist[static_cast<std::size_t>(a) * n + b]; };
        std::vector<int>& ord = s.tour.order;
        bool improved = true;
        while (improved) {
            improved = false;
            for (int i = 0; i < n - 1 && !improved; ++i) {
                int a = ord[static_cast<std::size_t>(i)];
                int b = ord[static_cast<std::size_t>(i + 1)];
                int j_end = (i == 0) ? n - 1 : n; // skip the move that touches the same edge twice
                for (int j = i + 2; j < j_end; ++j) {
                    int c = ord[static_cast<std::size_t>(j)];
                    int dn = ord[static_cast<std::size_t>((j + 1) % n)];
                    double delta = d(a, c) + d(b, dn) - d(a, b) - d(c, dn);
                    if (delta < -1e-12) {
                        std::reverse(ord.begin() + i + 1, ord.begin() + j + 1);
                        improved = true;
                        break;
                    }
                }
            }
        }
    }
    s.cost = tour_cost(instance, s.tour);
    return s;
}

} // namespace hardtsp
