#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hardtsp/baseline.hpp"
#include "hardtsp/errors.hpp"
#include "hardtsp/optimizer.hpp"
#include "hardtsp/parallel.hpp"
#include "hardtsp/policy.hpp"
#include "hardtsp/rng.hpp"
#include "hardtsp/tsp.hpp"

namespace hardtsp {

namespace detail {

inline TspInstance uniform_instance(int n, Rng ri) {
    TspInstance inst;
    inst.nodes.resize(static_cast<std::size_t>(n));
    for (auto& p : inst.nodes) {
        p.x = ri.uniform();
        p.y = ri.uniform();
    }
    return inst;
}

} // namespace detail

/// Uniform instances on the unit square. Instance i is a pure function of
/// (rng seed, i), so a fixed seed reproduces the dataset regardless of how
/// many instances are requested around it.
inline std::vector<TspInstance> gen_uniform(int n, int count, Rng rng) {
    if (n < 3) throw ConfigError("instances need at least three nodes");
    if (count < 1) throw ConfigError("instance count must be positive");
    std::vector<TspInstance> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        out[static_cast<std::size_t>(i)] = detail::uniform_instance(n, rng.child(static_cast<std::uint64_t>(i)));
        out[static_cast<std::size_t>(i)].provenance =
            "uniform n=" + std::to_string(n) + " seed=" + std::to_string(rng.seed()) + " idx=" + std::to_string(i);
    }
    return out;
}

struct GmmConfig {
    int n = 20;
    int c_min = 3;
    int c_max = 7;
    double c_dist = 10.0;

    void validate() const {
        if (n < 3) throw ConfigError("instances need at least three nodes");
        if (c_min < 1 || c_min > c_max) throw ConfigError("cluster count range must satisfy 1 <= c_min <= c_max");
        if (!(c_dist >= 0.0)) throw ConfigError("center range must be nonnegative");
    }
};

/// Gaussian-mixture instances: a uniform cluster count in {c_min..c_max},
/// centers uniform on [0, c_dist]^2, nodes drawn from unit-variance
/// Gaussians at a uniformly chosen center, then min-max projected into the
/// unit square. A degenerate projection resamples the instance from a fresh
/// child stream, with bounded retries.
inline std::vector<TspInstance> gen_gaussian_mixture(const GmmConfig& cfg, int count, Rng rng) {
    cfg.validate();
    if (count < 1) throw ConfigError("instance count must be positive");
    constexpr int kMaxRetries = 16;
    std::vector<TspInstance> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        TspInstance inst;
        int n_c = 0;
        int attempt = 0;
        for (;; ++attempt) {
            if (attempt > kMaxRetries)
                throw DegenerateInstanceError("gaussian mixture kept collapsing to a degenerate instance", 0);
            Rng ra = rng.child(static_cast<std::uint64_t>(i)).child(static_cast<std::uint64_t>(attempt));
            n_c = ra.uniform_int(cfg.c_min, cfg.c_max);
            std::vector<Point> centers(static_cast<std::size_t>(n_c));
            for (auto& c : centers) {
                c.x = cfg.c_dist == 0.0 ? 0.0 : ra.uniform(0.0, cfg.c_dist);
                c.y = cfg.c_dist == 0.0 ? 0.0 : ra.uniform(0.0, cfg.c_dist);
            }
            std::vector<Point> raw(static_cast<std::size_t>(cfg.n));
            for (auto& p : raw) {
                const Point& c = centers[static_cast<std::size_t>(ra.uniform_int(0, n_c - 1))];
                p.x = ra.normal(c.x, 1.0);
                p.y = ra.normal(c.y, 1.0);
            }
            try {
                inst.nodes = project_unit_square(raw);
            } catch (const DegenerateInstanceError&) {
                continue;
            }
            break;
        }
        inst.provenance = "gmm n=" + std::to_string(cfg.n) + " nc=" + std::to_string(n_c) +
                          " cdist=" + std::to_string(cfg.c_dist) + " cmin=" + std::to_string(cfg.c_min) +
                          " cmax=" + std::to_string(cfg.c_max) + " seed=" + std::to_string(rng.seed()) +
                          " idx=" + std::to_string(i);
        out[static_cast<std::size_t>(i)] = std::move(inst);
    }
    return out;
}

struct SurrogateConfig {
    int inner_steps = 1;
    double inner_lr = 1e-4;

    void validate() const {
        if (inner_steps < 1) throw ConfigError("surrogate needs at least one inner step");
        if (!(inner_lr >= 0.0)) throw ConfigError("surrogate learning rate must be nonnegative");
    }
};

/// Detached copy of the model advanced by inner_steps policy-gradient steps
/// on exactly this batch, with a self-greedy baseline and fresh optimizer
/// state. The original model is untouched. A zero learning rate is the null
/// update and returns an identical copy.
///
/// Only parameters move; normalization running statistics stay at the
/// model's. Hardness evaluation normalizes with per-instance statistics, so
/// the buffers play no role there, and folding a small batch into them would
/// perturb greedy evaluation far more than the parameter step itself.
inline PolicyModel surrogate_update(const PolicyModel& model, const std::vector<TspInstance>& batch,
                                    const SurrogateConfig& cfg, Rng rng) {
    cfg.validate();
    if (batch.empty()) throw ConfigError("surrogate update needs a nonempty batch");
    PolicyModel s = model;
    s.store.reset_optimizer();
    if (cfg.inner_lr == 0.0) return s;
    for (int step = 0; step < cfg.inner_steps; ++step) {
        std::vector<double> base = greedy_costs(s, batch);
        auto grads = reinforce_gradient(s, batch, base, rng.child(static_cast<std::uint64_t>(step)));
        GradientMap mean = zero_gradients(s.store);
        for (const auto& ig : grads) axpy_gradients(mean, ig.grads, 1.0 / static_cast<double>(grads.size()));
        clip_gradient_norm(mean, 1.0);
        AdamConfig adam;
        adam.lr = cfg.inner_lr;
        adam_step(s.store, mean, adam);
    }
    return s;
}

struct HardnessReport {
    double hardness = 0.0;
    double solver_cost = 0.0;    // model cost estimate
    double surrogate_cost = 0.0; // improved-model cost estimate
};

/// Solver-relative hardness H = (C_model - C_surrogate) / C_surrogate.
///
/// Both costs are Monte Carlo estimates over the same rollout streams
/// (common random numbers), which cancels most sampling noise in the
/// difference; with surrogate == model the estimate is exactly zero.
inline HardnessReport hardness(const TspInstance& instance, const PolicyModel& model,
                               const PolicyModel& surrogate, int rollouts, Rng rng) {
    HardnessReport r;
    r.solver_cost = solver_cost(model, instance, rollouts, rng);
    r.surrogate_cost = solver_cost(surrogate, instance, rollouts, rng);
    if (!(r.surrogate_cost > 0.0))
        throw ContractError("surrogate cost is not positive; tour costs cannot vanish");
    r.hardness = (r.solver_cost - r.surrogate_cost) / r.surrogate_cost;
    return r;
}

/// Monte Carlo estimate of the hardness derivative in every node coordinate:
///   (1/m) sum_j [ (C(pi_j)/C') d log p(pi_j) + d C(pi_j)/C' ]
/// with C' the (constant) surrogate cost. The log-probability term flows
/// through the tape's coordinate leaf; the tour-length term is analytic.
/// The centered flag subtracts the mean sampled cost inside the score term,
/// an optional variance reduction that keeps the estimator unbiased.
inline Tensor hardness_gradient(const TspInstance& instance, const PolicyModel& model,
                                double surrogate_cost, int rollouts, Rng rng, bool centered = false) {
    if (!(surrogate_cost > 0.0)) throw ContractError("surrogate cost must be positive");
    if (rollouts < 1) throw ConfigError("hardness gradient needs at least one rollout");
    int n = instance.n();

    PolicyGraph g(model, instance, BnMode::train, /*track_params=*/false, /*track_coords=*/true);
    std::vector<ad::Var> logps;
    std::vector<Tour> tours;
    std::vector<double> costs;
    logps.reserve(static_cast<std::size_t>(rollouts));
    for (int j = 0; j < rollouts; ++j) {
        Rng rj = rng.child(static_cast<std::uint64_t>(j));
        auto dec = g.decode(DecodeMode::sample, &rj);
        costs.push_back(tour_cost(instance, dec.tour));
        tours.push_back(std::move(dec.tour));
        logps.push_back(dec.log_prob);
    }
    double mean_cost = 0.0;
    for (double c : costs) mean_cost += c;
    mean_cost /= static_cast<double>(rollouts);

    ad::Var score{};
    for (int j = 0; j < rollouts; ++j) {
        double w = (costs[static_cast<std::size_t>(j)] - (centered ? mean_cost : 0.0)) / surrogate_cost;
        ad::Var term = g.tape.scale(logps[static_cast<std::size_t>(j)], w);
        score = j == 0 ? term : g.tape.add(score, term);
    }
    g.tape.backward(g.tape.scale(score, 1.0 / static_cast<double>(rollouts)));
    Tensor grad = g.coord_grad(); // (n, 2)

    for (int j = 0; j < rollouts; ++j) {
        auto cg = tour_cost_gradient(instance, tours[static_cast<std::size_t>(j)]);
        double w = 1.0 / (surrogate_cost * static_cast<double>(rollouts));
        for (int i = 0; i < n; ++i) {
            grad.v[static_cast<std::size_t>(2 * i)] += w * cg[static_cast<std::size_t>(i)].x;
            grad.v[static_cast<std::size_t>(2 * i + 1)] += w * cg[static_cast<std::size_t>(i)].y;
        }
    }
    return grad;
}

struct HagConfig {
    double eta = 5.0;
    int steps = 4;
    int rollouts = 8;
    SurrogateConfig surrogate;
    bool centered_score = false; // variance-reduced score term
    double noise_std = 0.0;      // optional exploration noise per ascent step
    int max_retries = 8;
    int n = 20;

    void validate() const {
        if (!(eta >= 0.0)) throw ConfigError("ascent step size must be nonnegative");
        if (steps < 1) throw ConfigError("ascent needs at least one step");
        if (rollouts < 1) throw ConfigError("hardness estimation needs at least one rollout");
        if (!(noise_std >= 0.0)) throw ConfigError("noise level must be nonnegative");
        if (max_retries < 1) throw ConfigError("retry budget must be positive");
        if (n < 3) throw ConfigError("instances need at least three nodes");
        surrogate.validate();
    }
};

/// Hardness-adaptive generation: uniform seeds, then `steps` rounds of
/// projected gradient ascent on the hardness estimate. Each round fits one
/// surrogate on the whole current batch, then ascends instances in parallel:
///   X <- project(X + eta * hardness_gradient(X)).
/// A degenerate projection replaces that instance with a fresh uniform draw
/// (bounded retries). With eta = 0 the ascent is a no-op and the output is
/// exactly gen_uniform's.
inline std::vector<TspInstance> gen_hardness_adaptive(const PolicyModel& model, const HagConfig& cfg,
                                                      int count, Rng rng) {
    cfg.validate();
    if (count < 1) throw ConfigError("instance count must be positive");

    std::vector<TspInstance> xs(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        xs[static_cast<std::size_t>(i)] = detail::uniform_instance(cfg.n, rng.child(static_cast<std::uint64_t>(i)));

    auto stamp = [&](int i) {
        xs[static_cast<std::size_t>(i)].provenance =
            "hag eta=" + std::to_string(cfg.eta) + " steps=" + std::to_string(cfg.steps) +
            " rollouts=" + std::to_string(cfg.rollouts) + " seed=" + std::to_string(rng.seed()) +
            " idx=" + std::to_string(i);
    };

    if (cfg.eta == 0.0) {
        for (int i = 0; i < count; ++i) stamp(i);
        return xs;
    }

    std::vector<int> retries(static_cast<std::size_t>(count), 0);
    for (int step = 0; step < cfg.steps; ++step) {
        PolicyModel surrogate =
            surrogate_update(model, xs, cfg.surrogate, rng.child("surrogate", static_cast<std::uint64_t>(step)));
        parallel_for(count, [&](int i) {
            TspInstance& inst = xs[static_cast<std::size_t>(i)];
            Rng ri = rng.child("ascent", static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i));
            double c_sur = solver_cost(surrogate, inst, cfg.rollouts, ri.child("surrogate-cost"));
            Tensor grad =
                hardness_gradient(inst, model, c_sur, cfg.rollouts, ri.child("gradient"), cfg.centered_score);

            std::vector<Point> moved(inst.nodes.size());
            Rng noise = ri.child("noise");
            for (std::size_t k = 0; k < moved.size(); ++k) {
                moved[k].x = inst.nodes[k].x + cfg.eta * grad.v[2 * k];
                moved[k].y = inst.nodes[k].y + cfg.eta * grad.v[2 * k + 1];
                if (cfg.noise_std > 0.0) {
                    moved[k].x += cfg.noise_std * noise.normal();
                    moved[k].y += cfg.noise_std * noise.normal();
                }
            }
            try {
                inst.nodes = project_unit_square(moved);
            } catch (const DegenerateInstanceError&) {
                int& r = retries[static_cast<std::size_t>(i)];
                if (++r > cfg.max_retries)
                    throw DegenerateInstanceError("ascent kept collapsing an instance", 0);
                inst = detail::uniform_instance(
                    cfg.n, rng.child("retry", static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(r)));
            }
        });
    }
    for (int i = 0; i < count; ++i) stamp(i);
    return xs;
}

} // namespace hardtsp
