#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include "hardtsp/baseline.hpp"
#include "hardtsp/errors.hpp"
#include "hardtsp/generators.hpp"
#include "hardtsp/optimizer.hpp"
#include "hardtsp/parallel.hpp"
#include "hardtsp/policy.hpp"
#include "hardtsp/rng.hpp"
#include "hardtsp/solvers.hpp"
#include "hardtsp/tsp.hpp"

namespace hardtsp {

/// Transform F applied to hardness values before the temperature softmax.
/// The standardized variant recenters each batch (zero mean, unit spread),
/// which keeps weighting stable while raw hardness magnitudes drift over
/// training.
enum class HardnessTransform { identity, standardize };

struct CurriculumSchedule {
    double t_start = 5.0;
    double t_end = 0.5;
    double decay = 0.9; // per epoch; < 1 anneals toward hard samples, > 1 the reverse

    void validate() const {
        if (!(t_start > 0.0) || !(t_end > 0.0)) throw ConfigError("temperatures must be positive");
        if (!(decay > 0.0)) throw ConfigError("temperature decay must be positive");
    }
};

struct CurriculumState {
    double temperature = 5.0;
    int epoch = 0; // schedule steps taken
    CurriculumSchedule schedule;
    HardnessTransform transform = HardnessTransform::identity;

    static CurriculumState init(const CurriculumSchedule& schedule,
                                HardnessTransform transform = HardnessTransform::identity) {
        schedule.validate();
        CurriculumState s;
        s.temperature = schedule.t_start;
        s.schedule = schedule;
        s.transform = transform;
        return s;
    }

    void validate() const {
        if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
        if (epoch < 0) throw ConfigError("schedule step count cannot be negative");
        schedule.validate();
    }
};

/// Softmax weights over transformed hardness: w_i = softmax(F(H_i)/T).
///
/// Positive, sum to 1, and preserve the argmax of F(H). Equal inputs give
/// exactly 1/K each. Low temperatures sharpen toward the hardest sample,
/// high temperatures flatten toward uniform.
inline std::vector<double> sample_weights(const std::vector<double>& hardness,
                                          const CurriculumState& state) {
    state.validate();
    if (hardness.empty()) throw DomainError("sample_weights: need at least one hardness value");
    for (double h : hardness)
        if (!std::isfinite(h)) throw DomainError("sample_weights: non-finite hardness value");

    std::vector<double> logits = hardness;
    if (state.transform == HardnessTransform::standardize && logits.size() > 1) {
        double mean = 0.0;
        for (double v : logits) mean += v;
        mean /= static_cast<double>(logits.size());
        double var = 0.0;
        for (double v : logits) var += (v - mean) * (v - mean);
        double sd = std::sqrt(var / static_cast<double>(logits.size()));
        if (sd > 0.0)
            for (double& v : logits) v = (v - mean) / sd;
        else
            for (double& v : logits) v = 0.0;
    }
    for (double& v : logits) v /= state.temperature;

    double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& v : logits) {
        v = std::exp(v - top);
        total += v;
    }
    for (double& v : logits) v /= total;
    return logits;
}

/// One schedule step: T <- max(T_end, T * decay), counting the step taken.
/// decay = 1 holds the temperature; decay > 1 gives the increasing variant.
inline CurriculumState temperature_step(CurriculumState state) {
    state.validate();
    state.temperature = std::max(state.schedule.t_end, state.temperature * state.schedule.decay);
    state.epoch += 1;
    return state;
}

struct StepResult {
    double mean_cost = 0.0; // sampled rollout costs, unweighted batch stats
    double std_cost = 0.0;
    double grad_norm = 0.0; // weighted gradient norm before clipping
};

/// One policy update from a weighted batch: the optimizer consumes
/// sum_i w_i * g_i. Weights from sample_weights sum to 1, so uniform
/// weights reproduce the conventional mean-gradient step.
inline StepResult weighted_train_step(PolicyModel& model, const std::vector<TspInstance>& batch,
                                      const std::vector<double>& weights,
                                      const std::vector<double>& baseline_costs,
                                      const AdamConfig& adam, double max_grad_norm, Rng rng) {
    if (batch.empty()) throw ContractError("weighted step needs a nonempty batch");
    if (weights.size() != batch.size()) throw ContractError("weight count does not match batch");
    if (baseline_costs.size() != batch.size())
        throw ContractError("baseline cost count does not match batch");
    if (!(max_grad_norm > 0.0)) throw ConfigError("gradient clip threshold must be positive");

    auto grads = reinforce_gradient(model, batch, baseline_costs, rng);
    GradientMap total = zero_gradients(model.store);
    for (std::size_t i = 0; i < grads.size(); ++i) axpy_gradients(total, grads[i].grads, weights[i]);

    StepResult r;
    r.grad_norm = gradient_norm(total);
    clip_gradient_norm(total, max_grad_norm);
    adam_step(model.store, total, adam);
    merge_bn_stats(model, grads);

    double mean = 0.0;
    for (const auto& ig : grads) mean += ig.sample_cost;
    mean /= static_cast<double>(grads.size());
    double var = 0.0;
    for (const auto& ig : grads) var += (ig.sample_cost - mean) * (ig.sample_cost - mean);
    r.mean_cost = mean;
    r.std_cost = grads.size() > 1 ? std::sqrt(var / static_cast<double>(grads.size() - 1)) : 0.0;
    return r;
}

enum class EvalSource { uniform, gmm };
enum class OracleKind { exact, twoopt };

inline const char* oracle_name(OracleKind k) { return k == OracleKind::exact ? "exact" : "twoopt"; }

struct TrainConfig {
    PolicyConfig policy = PolicyConfig::desk();
    int n = 20;
    int epochs = 10;             // L
    int warmup_epochs = 1;       // leading epochs on uniform data only
    int instances_per_epoch = 128;
    int batch_size = 8;
    double hard_fraction = 0.5;  // rho: share of hardness-adaptive instances after warm-up
    bool use_hag = true;
    bool use_curriculum = true;  // off: exact uniform weights, frozen temperature
    double learning_rate = 1e-4;
    double max_grad_norm = 1.0;
    int hardness_rollouts = 4;   // m for the per-batch hardness estimates
    SurrogateConfig surrogate;   // per-batch surrogate for those estimates
    HagConfig hag;               // generator settings; n is overridden to match
    CurriculumSchedule schedule;
    HardnessTransform transform = HardnessTransform::identity;
    int eval_instances = 64;     // held-out set, oracle-scored each epoch
    EvalSource eval_source = EvalSource::uniform;
    GmmConfig eval_gmm;          // when eval_source == gmm; n overridden to match
    int baseline_instances = 64;
    double baseline_alpha = 0.05;
    std::uint64_t seed = 1;

    void validate() const {
        policy.validate();
        if (n < 3) throw ConfigError("instances need at least three nodes");
        if (epochs < 1) throw ConfigError("need at least one epoch");
        if (warmup_epochs < 0 || warmup_epochs > epochs)
            throw ConfigError("warm-up epochs must lie within the epoch budget");
        if (instances_per_epoch < 1) throw ConfigError("need at least one instance per epoch");
        if (batch_size < 1) throw ConfigError("batch size must be positive");
        if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0))
            throw ConfigError("hard-sample fraction must lie in [0, 1]");
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        if (!(max_grad_norm > 0.0)) throw ConfigError("gradient clip threshold must be positive");
        if (hardness_rollouts < 1) throw ConfigError("hardness estimation needs at least one rollout");
        if (eval_instances < 2) throw ConfigError("held-out evaluation needs at least two instances");
        if (baseline_instances < 2) throw ConfigError("the baseline needs at least two instances");
        if (!(baseline_alpha > 0.0 && baseline_alpha < 1.0))
            throw ConfigError("significance level must lie in (0, 1)");
        surrogate.validate();
        schedule.validate();
        HagConfig h = hag;
        h.n = n;
        h.validate();
        if (eval_source == EvalSource::gmm) {
            GmmConfig g = eval_gmm;
            g.n = n;
            g.validate();
        }
    }
};

struct EpochMetrics {
    int epoch = 0;
    double mean_hardness = 0.0;
    double std_hardness = 0.0;
    double mean_cost = 0.0; // training rollout costs
    double std_cost = 0.0;
    GapStats heldout;       // greedy decode vs oracle on the held-out set
    double temperature = 0.0; // in effect during this epoch
    double seconds = 0.0;     // wall clock; the one nondeterministic field
};

struct TrainResult {
    PolicyModel model;
    PolicyModel baseline_model;
    CurriculumState state;
    std::vector<EpochMetrics> metrics;
    OracleKind eval_oracle = OracleKind::exact;
};

/// Everything needed to continue a run: the two models (the trainee keeps
/// its optimizer state), the schedule position, and the next epoch index.
/// All data and rollout streams key off (master seed, epoch, batch, index),
/// so a resumed run replays the exact trajectory of an uninterrupted one.
struct TrainSnapshot {
    PolicyModel model;
    PolicyModel baseline_model;
    CurriculumState state;
    int next_epoch = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&, const TrainSnapshot&)>;

namespace detail {

inline void seeded_shuffle(std::vector<TspInstance>& xs, Rng rng) {
    for (std::size_t i = xs.size(); i > 1; --i) {
        auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(xs[i - 1], xs[j]);
    }
}

struct EvalFixture {
    std::vector<TspInstance> instances;
    std::vector<double> oracle_costs;
    OracleKind kind = OracleKind::exact;
};

inline EvalFixture make_eval_fixture(const TrainConfig& cfg, Rng root) {
    EvalFixture f;
    if (cfg.eval_source == EvalSource::gmm) {
        GmmConfig g = cfg.eval_gmm;
        g.n = cfg.n;
        f.instances = gen_gaussian_mixture(g, cfg.eval_instances, root.child("eval-data"));
    } else {
        f.instances = gen_uniform(cfg.n, cfg.eval_instances, root.child("eval-data"));
    }
    f.kind = cfg.n <= kExactNodeLimit ? OracleKind::exact : OracleKind::twoopt;
    f.oracle_costs.resize(f.instances.size());
    Rng oracle_rng = root.child("eval-oracle");
    parallel_for(static_cast<int>(f.instances.size()), [&](int i) {
        auto k = static_cast<std::size_t>(i);
        f.oracle_costs[k] = f.kind == OracleKind::exact
                                ? solve_exact(f.instances[k]).cost
                                : solve_heuristic(f.instances[k], oracle_rng.child(static_cast<std::uint64_t>(i))).cost;
    });
    return f;
}

inline GapStats heldout_gaps(const PolicyModel& model, const EvalFixture& f) {
    std::vector<double> gaps(f.instances.size());
    parallel_for(static_cast<int>(f.instances.size()), [&](int i) {
        auto k = static_cast<std::size_t>(i);
        double c = greedy_rollout(model, f.instances[k]).cost;
        // 2-opt references are not lower bounds, so the model may beat them;
        // the guarded gap applies only to the exact oracle.
        gaps[k] = f.kind == OracleKind::exact ? optimality_gap(c, f.oracle_costs[k])
                                              : (c - f.oracle_costs[k]) / f.oracle_costs[k];
    });
    return gap_stats(gaps);
}

inline TrainSnapshot fresh_snapshot(const TrainConfig& cfg, Rng root) {
    TrainSnapshot s;
    s.model = PolicyModel::init(cfg.policy, root.child("init").seed());
    s.baseline_model = s.model;
    s.state = CurriculumState::init(cfg.schedule, cfg.transform);
    s.next_epoch = 0;
    return s;
}

} // namespace detail

/// Continues (or starts, with a fresh snapshot) the curriculum training
/// loop. Per epoch: build the dataset (uniform during warm-up, a rho mix of
/// hardness-adaptive instances after), then per batch fit one shared
/// surrogate, measure hardness, softmax-weight the per-instance REINFORCE
/// gradients, and take the weighted step. Epoch ends advance the
/// temperature (post-warm-up), run the significance-tested baseline
/// replacement, and score the held-out set against the oracle.
inline TrainResult resume_training(const TrainConfig& cfg, TrainSnapshot snap,
                                   const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (snap.next_epoch < 0 || snap.next_epoch > cfg.epochs)
        throw ConfigError("resume epoch outside the configured budget");
    snap.state.validate();

    Rng root(cfg.seed);
    detail::EvalFixture eval = detail::make_eval_fixture(cfg, root);
    auto baseline_set = gen_uniform(cfg.n, cfg.baseline_instances, root.child("baseline-data"));
    RolloutBaseline baseline = make_baseline(snap.baseline_model, baseline_set, cfg.baseline_alpha);

    AdamConfig adam;
    adam.lr = cfg.learning_rate;
    HagConfig hag = cfg.hag;
    hag.n = cfg.n;

    TrainResult out;
    out.eval_oracle = eval.kind;

    for (int epoch = snap.next_epoch; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        auto e = static_cast<std::uint64_t>(epoch);
        bool warm = epoch < cfg.warmup_epochs;

        int hard_count = 0;
        if (!warm && cfg.use_hag)
            hard_count = static_cast<int>(
                std::lround(cfg.hard_fraction * static_cast<double>(cfg.instances_per_epoch)));

        std::vector<TspInstance> data;
        data.reserve(static_cast<std::size_t>(cfg.instances_per_epoch));
        try {
            if (hard_count > 0) {
                auto hard = gen_hardness_adaptive(snap.model, hag, hard_count, root.child("hag-data", e));
                data.insert(data.end(), std::make_move_iterator(hard.begin()),
                            std::make_move_iterator(hard.end()));
            }
            if (cfg.instances_per_epoch - hard_count > 0) {
                auto unif =
                    gen_uniform(cfg.n, cfg.instances_per_epoch - hard_count, root.child("uniform-data", e));
                data.insert(data.end(), std::make_move_iterator(unif.begin()),
                            std::make_move_iterator(unif.end()));
            }
            detail::seeded_shuffle(data, root.child("shuffle", e));
        } catch (...) {
            std::throw_with_nested(
                ContractError("dataset construction failed at epoch " + std::to_string(epoch)));
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.temperature = snap.state.temperature;
        double cost_sum = 0.0, cost_sq = 0.0, hard_sum = 0.0, hard_sq = 0.0;
        int cost_n = 0, hard_n = 0;

        int batches = (cfg.instances_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
        for (int b = 0; b < batches; ++b) {
            try {
                auto lo = static_cast<std::size_t>(b) * static_cast<std::size_t>(cfg.batch_size);
                auto hi = std::min(lo + static_cast<std::size_t>(cfg.batch_size), data.size());
                std::vector<TspInstance> batch(data.begin() + static_cast<std::ptrdiff_t>(lo),
                                               data.begin() + static_cast<std::ptrdiff_t>(hi));
                auto bu = static_cast<std::uint64_t>(b);

                PolicyModel surrogate =
                    surrogate_update(snap.model, batch, cfg.surrogate, root.child("surrogate", e, bu));
                std::vector<double> hard(batch.size());
                Rng hrng = root.child("hardness", e, bu);
                parallel_for(static_cast<int>(batch.size()), [&](int i) {
                    auto k = static_cast<std::size_t>(i);
                    hard[k] = hardness(batch[k], snap.model, surrogate, cfg.hardness_rollouts,
                                       hrng.child(static_cast<std::uint64_t>(i)))
                                  .hardness;
                });

                std::vector<double> weights;
                if (cfg.use_curriculum) {
                    weights = sample_weights(hard, snap.state);
                } else {
                    weights.assign(batch.size(), 1.0 / static_cast<double>(batch.size()));
                }

                auto base = greedy_costs(baseline.model, batch);
                StepResult sr = weighted_train_step(snap.model, batch, weights, base, adam,
                                                    cfg.max_grad_norm, root.child("step", e, bu));

                for (double h : hard) {
                    hard_sum += h;
                    hard_sq += h * h;
                    ++hard_n;
                }
                cost_sum += sr.mean_cost * static_cast<double>(batch.size());
                cost_n += static_cast<int>(batch.size());
                cost_sq += (sr.std_cost * sr.std_cost * static_cast<double>(batch.size() - 1)) +
                           sr.mean_cost * sr.mean_cost * static_cast<double>(batch.size());
            } catch (...) {
                std::throw_with_nested(ContractError("training failed at epoch " + std::to_string(epoch) +
                                                     ", batch " + std::to_string(b)));
            }
        }

        if (!warm && cfg.use_curriculum) snap.state = temperature_step(snap.state);
        baseline_update(baseline, snap.model);
        snap.baseline_model = baseline.model;
        snap.next_epoch = epoch + 1;

        em.mean_hardness = hard_n > 0 ? hard_sum / hard_n : 0.0;
        em.std_hardness =
            hard_n > 1 ? std::sqrt(std::max(0.0, (hard_sq - hard_n * em.mean_hardness * em.mean_hardness) /
                                                     (hard_n - 1)))
                       : 0.0;
        em.mean_cost = cost_n > 0 ? cost_sum / cost_n : 0.0;
        em.std_cost =
            cost_n > 1
                ? std::sqrt(std::max(0.0, (cost_sq - cost_n * em.mean_cost * em.mean_cost) / (cost_n - 1)))
                : 0.0;
        em.heldout = detail::heldout_gaps(snap.model, eval);
        em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        out.metrics.push_back(em);
        if (on_epoch) on_epoch(em, snap);
    }

    out.model = std::move(snap.model);
    out.baseline_model = std::move(snap.baseline_model);
    out.state = snap.state;
    return out;
}

/// Fresh training run from the config's seed; see resume_training.
inline TrainResult run_training(const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    return resume_training(cfg, detail::fresh_snapshot(cfg, Rng(cfg.seed)), on_epoch);
}

} // namespace hardtsp
