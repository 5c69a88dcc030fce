#pragma once

#include <cmath>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "hardtsp/errors.hpp"
#include "hardtsp/parallel.hpp"
#include "hardtsp/policy.hpp"
#include "hardtsp/tsp.hpp"

namespace hardtsp {

/// Greedy-rollout baseline: a frozen copy of the policy whose greedy cost is
/// the advantage reference, plus the held-out set used to decide replacement.
struct RolloutBaseline {
    PolicyModel model;
    std::vector<TspInstance> eval_set;
    std::vector<double> eval_costs; // greedy cost of `model` on eval_set
    double alpha = 0.05;
};

inline std::vector<double> greedy_costs(const PolicyModel& model,
                                        const std::vector<TspInstance>& instances) {
    std::vector<double> costs(instances.size(), 0.0);
    parallel_for(static_cast<int>(instances.size()), [&](int i) {
        costs[static_cast<std::size_t>(i)] =
            greedy_rollout(model, instances[static_cast<std::size_t>(i)]).cost;
    });
    return costs;
}

inline RolloutBaseline make_baseline(const PolicyModel& model,
                                     std::vector<TspInstance> eval_set, double alpha = 0.05) {
    if (eval_set.size() < 2) throw ConfigError("baseline evaluation set needs at least two instances");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    RolloutBaseline b;
    b.model = model;
    b.eval_set = std::move(eval_set);
    b.eval_costs = greedy_costs(b.model, b.eval_set);
    b.alpha = alpha;
    return b;
}

struct BaselineDecision {
    bool replaced = false;
    double mean_diff = 0.0; // candidate minus baseline, negative is better
    double t_stat = 0.0;
    double p_value = 1.0;
};

/// One-sided paired t-test of the candidate's greedy costs against the
/// frozen baseline's on the evaluation set. The baseline is replaced when
/// the candidate is significantly better (p < alpha).
inline BaselineDecision baseline_update(RolloutBaseline& baseline, const PolicyModel& candidate) {
    if (baseline.eval_set.empty()) throw ConfigError("baseline evaluation set is empty");
    std::vector<double> cand = greedy_costs(candidate, baseline.eval_set);
    std::size_t k = cand.size();

    BaselineDecision d;
    double mean = 0.0;
    for (std::size_t i = 0; i < k; ++i) mean += cand[i] - baseline.eval_costs[i];
    mean /= static_cast<double>(k);
    d.mean_diff = mean;

    double ss = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double diff = cand[i] - baseline.eval_costs[i] - mean;
        ss += diff * diff;
    }
    double sd = std::sqrt(ss / static_cast<double>(k - 1));

    if (sd == 0.0) {
        // Constant difference: better on every instance or not at all.
        d.p_value = mean < 0.0 ? 0.0 : 1.0;
        d.t_stat = mean < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0;
    } else {
        d.t_stat = mean / (sd / std::sqrt(static_cast<double>(k)));
        boost::math::students_t dist(static_cast<double>(k - 1));
        d.p_value = boost::math::cdf(dist, d.t_stat);
    }
    if (d.p_value < baseline.alpha) {
        baseline.model = candidate;
        baseline.eval_costs = std::move(cand);
        d.replaced = true;
    }
    return d;
}

} // namespace hardtsp
