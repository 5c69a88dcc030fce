#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <string>
#include <vector>

#include "hardtsp/errors.hpp"

namespace hardtsp {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// A TSP instance: planar nodes, typically projected into the unit square.
struct TspInstance {
    std::vector<Point> nodes;
    /// How the instance was produced, e.g. "uniform seed=7". Informational.
    std::string provenance;

    int n() const { return static_cast<int>(nodes.size()); }
};

/// Visiting order; a permutation of {0, ..., n-1}. The tour is closed, the
/// edge from back() to front() is implied.
struct Tour {
    std::vector<int> order;

    int n() const { return static_cast<int>(order.size()); }
};

inline double euclidean(const Point& a, const Point& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

/// Throws InvalidTourError unless tour is a permutation of instance's nodes.
inline void validate_tour(const TspInstance& instance, const Tour& tour) {
    int n = instance.n();
    if (tour.n() != n)
        throw InvalidTourError("tour length " + std::to_string(tour.n()) +
                               " does not match instance size " + std::to_string(n));
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (int v : tour.order) {
        if (v < 0 || v >= n) throw InvalidTourError("tour visits node " + std::to_string(v) + " outside instance");
        if (seen[static_cast<std::size_t>(v)]) throw InvalidTourError("tour visits node " + std::to_string(v) + " twice");
        seen[static_cast<std::size_t>(v)] = 1;
    }
}

/// Closed tour length: sum of consecutive edge lengths plus the return edge.
inline double tour_cost(const TspInstance& instance, const Tour& tour) {
    validate_tour(instance, tour);
    int n = tour.n();
    if (n < 2) return 0.0;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const Point& a = instance.nodes[static_cast<std::size_t>(tour.order[static_cast<std::size_t>(i)])];
        const Point& b = instance.nodes[static_cast<std::size_t>(tour.order[static_cast<std::size_t>((i + 1) % n)])];
        total += euclidean(a, b);
    }
    return total;
}

/// Derivative of tour_cost with respect to every node coordinate.
///
/// Each edge (a, b) contributes (a - b)/|a - b| to node a and the negation to
/// node b. Coincident endpoints get a zero subgradient for that edge.
inline std::vector<Point> tour_cost_gradient(const TspInstance& instance, const Tour& tour) {
    validate_tour(instance, tour);
    int n = tour.n();
    std::vector<Point> grad(instance.nodes.size());
    if (n < 2) return grad;
    for (int i = 0; i < n; ++i) {
        int ia = tour.order[static_cast<std::size_t>(i)];
        int ib = tour.order[static_cast<std::size_t>((i + 1) % n)];
        const Point& a = instance.nodes[static_cast<std::size_t>(ia)];
        const Point& b = instance.nodes[static_cast<std::size_t>(ib)];
        double d = euclidean(a, b);
        if (d <= 0.0) {
            // Zero-length edge: the unit vector is taken as zero so ascent
            // loops keep running; near-duplicate points can occur under
            // generated data.
            std::fputs("warning: coincident adjacent tour nodes, using zero edge gradient\n", stderr);
            continue;
        }
        double gx = (a.x - b.x) / d;
        double gy = (a.y - b.y) / d;
        grad[static_cast<std::size_t>(ia)].x += gx;
        grad[static_cast<std::size_t>(ia)].y += gy;
        grad[static_cast<std::size_t>(ib)].x -= gx;
        grad[static_cast<std::size_t>(ib)].y -= gy;
    }
    return grad;
}

/// Relative excess of a cost over the reference optimum: (cost - opt)/opt.
///
/// A cost below the optimum by more than tolerance means the reference was
/// not optimal or the cost is corrupt; that throws OracleViolationError.
inline double optimality_gap(double cost, double optimal_cost, double tolerance = 1e-9) {
    if (!(optimal_cost > 0.0)) throw DomainError("optimality_gap: reference optimum must be positive");
    if (cost < optimal_cost - tolerance)
        throw OracleViolationError("cost " + std::to_string(cost) + " undercuts optimum " +
                                   std::to_string(optimal_cost));
    return (cost - optimal_cost) / optimal_cost;
}

/// Aggregate gap statistics over an instance set.
struct GapStats {
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation, n-1 denominator
    int count = 0;
};

inline GapStats gap_stats(const std::vector<double>& gaps) {
    GapStats s;
    s.count = static_cast<int>(gaps.size());
    if (s.count == 0) return s;
    double sum = 0.0;
    for (double g : gaps) sum += g;
    s.mean = sum / s.count;
    if (s.count > 1) {
        double ss = 0.0;
        for (double g : gaps) ss += (g - s.mean) * (g - s.mean);
        s.stddev = std::sqrt(ss / (s.count - 1));
    }
    return s;
}

/// Min-max normalization of a point set into the unit square, dimension-wise.
///
/// Throws DegenerateInstanceError (with the offending dimension, 0 for x and
/// 1 for y) when a dimension has zero range; callers resample instead of
/// clamping.
inline std::vector<Point> project_unit_square(const std::vector<Point>& points) {
    if (points.empty()) return {};
    double min_x = points[0].x, max_x = points[0].x;
    double min_y = points[0].y, max_y = points[0].y;
    for (const Point& p : points) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    if (points.size() == 1)
        throw DegenerateInstanceError("cannot project a single point", 0);
    if (!(max_x > min_x)) throw DegenerateInstanceError("zero coordinate range in x", 0);
    if (!(max_y > min_y)) throw DegenerateInstanceError("zero coordinate range in y", 1);
    std::vector<Point> out(points.size());
    double rx = max_x - min_x;
    double ry = max_y - min_y;
    // Divide rather than multiply by a precomputed reciprocal: division maps
    // the extremes to exactly 0 and 1, so outputs never leave the square.
    for (std::size_t i = 0; i < points.size(); ++i) {
        out[i].x = (points[i].x - min_x) / rx;
        out[i].y = (points[i].y - min_y) / ry;
    }
    return out;
}

} // namespace hardtsp
