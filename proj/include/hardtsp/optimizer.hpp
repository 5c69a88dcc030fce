#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hardtsp/errors.hpp"
#include "hardtsp/tensor.hpp"

namespace hardtsp {

/// Named parameters plus non-learned buffers (e.g. normalization running
/// statistics). std::map keeps iteration order stable, which makes gradient
/// reductions and checkpoints deterministic.
struct ParameterStore {
    std::map<std::string, Tensor> params;
    std::map<std::string, Tensor> buffers;

    /// Adam first and second moments, keyed like params, plus the step count.
    std::map<std::string, Tensor> adam_m;
    std::map<std::string, Tensor> adam_v;
    std::int64_t adam_step = 0;

    Tensor& param(const std::string& name) {
        auto it = params.find(name);
        if (it == params.end()) throw ContractError("unknown parameter: " + name);
        return it->second;
    }
    const Tensor& param(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw ContractError("unknown parameter: " + name);
        return it->second;
    }
    Tensor& buffer(const std::string& name) {
        auto it = buffers.find(name);
        if (it == buffers.end()) throw ContractError("unknown buffer: " + name);
        return it->second;
    }
    const Tensor& buffer(const std::string& name) const {
        auto it = buffers.find(name);
        if (it == buffers.end()) throw ContractError("unknown buffer: " + name);
        return it->second;
    }

    /// Clears optimizer state; used when cloning a model for a fresh run.
    void reset_optimizer() {
        adam_m.clear();
        adam_v.clear();
        adam_step = 0;
    }
};

/// Gradients keyed by parameter name.
using GradientMap = std::map<std::string, Tensor>;

inline GradientMap zero_gradients(const ParameterStore& store) {
    GradientMap g;
    for (const auto& [name, t] : store.params) g.emplace(name, Tensor::zeros(t.shape));
    return g;
}

/// out += factor * g for every parameter.
inline void axpy_gradients(GradientMap& out, const GradientMap& g, double factor) {
    for (auto& [name, acc] : out) {
        auto it = g.find(name);
        if (it == g.end()) throw ContractError("gradient missing for parameter: " + name);
        if (!acc.same_shape(it->second)) throw ShapeError("gradient shape mismatch for " + name);
        for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += factor * it->second.v[i];
    }
}

inline double gradient_norm(const GradientMap& g) {
    double ss = 0.0;
    for (const auto& [name, t] : g)
        for (double v : t.v) ss += v * v;
    return std::sqrt(ss);
}

/// Scales the whole gradient so its global L2 norm is at most max_norm.
inline void clip_gradient_norm(GradientMap& g, double max_norm) {
    double norm = gradient_norm(g);
    if (norm <= max_norm || norm == 0.0) return;
    double factor = max_norm / norm;
    for (auto& [name, t] : g)
        for (double& v : t.v) v *= factor;
}

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0; // L2 term added to the gradient
};

/// One Adam update with bias correction. Every parameter must have a
/// gradient of matching shape; a missing entry is an accounting error.
inline void adam_step(ParameterStore& store, const GradientMap& grads, const AdamConfig& cfg) {
    for (const auto& [name, p] : store.params) {
        auto it = grads.find(name);
        if (it == grads.end()) throw ContractError("gradient missing for parameter: " + name);
        if (!p.same_shape(it->second)) throw ShapeError("gradient shape mismatch for " + name);
    }
    store.adam_step += 1;
    double t = static_cast<double>(store.adam_step);
    double bc1 = 1.0 - std::pow(cfg.beta1, t);
    double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, p] : store.params) {
        const Tensor& g = grads.at(name);
        Tensor& m = store.adam_m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        Tensor& v = store.adam_v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        for (std::size_t i = 0; i < p.v.size(); ++i) {
            double gi = g.v[i] + cfg.weight_decay * p.v[i];
            m.v[i] = cfg.beta1 * m.v[i] + (1.0 - cfg.beta1) * gi;
            v.v[i] = cfg.beta2 * v.v[i] + (1.0 - cfg.beta2) * gi * gi;
            double mhat = m.v[i] / bc1;
            double vhat = v.v[i] / bc2;
            p.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

} // namespace hardtsp
