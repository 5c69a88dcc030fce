#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hardtsp/autodiff.hpp"
#include "hardtsp/errors.hpp"
#include "hardtsp/optimizer.hpp"
#include "hardtsp/rng.hpp"
#include "hardtsp/tensor.hpp"
#include "hardtsp/tsp.hpp"

namespace hardtsp {

struct PolicyConfig {
    int embedding_dim = 128;
    int heads = 8;
    int encoder_layers = 3;
    int ff_dim = 512;
    double logit_clip = 10.0;
    double bn_eps = 1e-5;
    double bn_momentum = 0.9; // running = momentum * running + (1 - momentum) * batch

    /// Small profile for CPU-scale experiments.
    static PolicyConfig desk() {
        PolicyConfig c;
        c.embedding_dim = 32;
        c.heads = 4;
        c.encoder_layers = 2;
        c.ff_dim = 128;
        return c;
    }

    void validate() const {
        if (embedding_dim <= 0 || heads <= 0 || encoder_layers <= 0 || ff_dim <= 0)
            throw ConfigError("policy dimensions must be positive");
        if (embedding_dim % heads != 0)
            throw ConfigError("embedding_dim must be divisible by heads");
        if (!(logit_clip > 0.0)) throw ConfigError("logit_clip must be positive");
    }
};

/// Attention-based tour construction policy. Parameters live in a
/// ParameterStore; the model itself is a plain value and copying it clones
/// the parameters.
struct PolicyModel {
    PolicyConfig cfg;
    ParameterStore store;

    static PolicyModel init(const PolicyConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        PolicyModel m;
        m.cfg = cfg;
        Rng rng(seed);
        int d = cfg.embedding_dim;
        auto weight = [&](const std::string& name, int in, int out) {
            Tensor t = Tensor::zeros({in, out});
            Rng r = rng.child(name);
            double bound = 1.0 / std::sqrt(static_cast<double>(in));
            for (double& v : t.v) v = r.uniform(-bound, bound);
            m.store.params.emplace(name, std::move(t));
        };
        auto vec = [&](const std::string& name, int len, int fan_in) {
            Tensor t = Tensor::zeros({len});
            Rng r = rng.child(name);
            double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (double& v : t.v) v = r.uniform(-bound, bound);
            m.store.params.emplace(name, std::move(t));
        };

        weight("embed.w", 2, d);
        vec("embed.b", d, 2);
        for (int l = 0; l < cfg.encoder_layers; ++l) {
            std::string p = "enc" + std::to_string(l) + ".";
            weight(p + "attn.wq", d, d);
            weight(p + "attn.wk", d, d);
            weight(p + "attn.wv", d, d);
            weight(p + "attn.wo", d, d);
            m.store.params.emplace(p + "bn1.gamma", Tensor::full({d}, 1.0));
            m.store.params.emplace(p + "bn1.beta", Tensor::zeros({d}));
            weight(p + "ff.w1", d, cfg.ff_dim);
            vec(p + "ff.b1", cfg.ff_dim, d);
            weight(p + "ff.w2", cfg.ff_dim, d);
            vec(p + "ff.b2", d, cfg.ff_dim);
            m.store.params.emplace(p + "bn2.gamma", Tensor::full({d}, 1.0));
            m.store.params.emplace(p + "bn2.beta", Tensor::zeros({d}));
            m.store.buffers.emplace(p + "bn1.run_mean", Tensor::zeros({d}));
            m.store.buffers.emplace(p + "bn1.run_var", Tensor::full({d}, 1.0));
            m.store.buffers.emplace(p + "bn2.run_mean", Tensor::zeros({d}));
            m.store.buffers.emplace(p + "bn2.run_var", Tensor::full({d}, 1.0));
        }
        weight("dec.glimpse.wq", 3 * d, d);
        weight("dec.glimpse.wk", d, d);
        weight("dec.glimpse.wv", d, d);
        weight("dec.glimpse.wo", d, d);
        weight("dec.final.wq", d, d);
        weight("dec.final.wk", d, d);
        {
            Tensor vf = Tensor::zeros({1, d});
            Tensor vl = Tensor::zeros({1, d});
            Rng rf = rng.child("dec.v_first");
            Rng rl = rng.child("dec.v_last");
            double bound = 1.0 / std::sqrt(static_cast<double>(d));
            for (double& v : vf.v) v = rf.uniform(-bound, bound);
            for (double& v : vl.v) v = rl.uniform(-bound, bound);
            m.store.params.emplace("dec.v_first", std::move(vf));
            m.store.params.emplace("dec.v_last", std::move(vl));
        }
        return m;
    }
};

enum class BnMode { train, eval };
enum class DecodeMode { greedy, sample };

struct DecodeResult {
    Tour tour;
    double log_prob = 0.0;
    double cost = 0.0;
};

/// Instance paired with its encoder output, ready for repeated decoding.
struct EncodedInstance {
    TspInstance instance;
    Tensor node_emb; // (n, embedding_dim)
};

namespace detail {

/// Row permutation that regroups (n, heads*dk) into (heads, n, dk).
inline std::vector<int> head_split_indices(int n, int heads) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(n) * heads);
    for (int h = 0; h < heads; ++h)
        for (int i = 0; i < n; ++i) idx.push_back(i * heads + h);
    return idx;
}

/// Inverse of head_split_indices: (heads, n, dk) rows back to (n, heads*dk).
inline std::vector<int> head_merge_indices(int n, int heads) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(n) * heads);
    for (int i = 0; i < n; ++i)
        for (int h = 0; h < heads; ++h) idx.push_back(h * n + i);
    return idx;
}

} // namespace detail

/// One instance's forward pass on a private tape. Parameters enter as leaves
/// (differentiable or constant), coordinates likewise, so the same graph
/// serves policy-gradient steps (track_params) and instance-hardness ascent
/// (track_coords).
class PolicyGraph {
public:
    PolicyGraph(const PolicyModel& model, const TspInstance& instance, BnMode bn,
                bool track_params = false, bool track_coords = false)
        : model_(model), n_(instance.n()), bn_(bn), track_params_(track_params) {
        if (n_ < 2) throw ConfigError("policy needs at least two nodes");
        Tensor coords = Tensor::zeros({n_, 2});
        for (int i = 0; i < n_; ++i) {
            coords.v[static_cast<std::size_t>(2 * i)] = instance.nodes[static_cast<std::size_t>(i)].x;
            coords.v[static_cast<std::size_t>(2 * i + 1)] = instance.nodes[static_cast<std::size_t>(i)].y;
        }
        coords_ = tape.leaf(std::move(coords), track_coords);
        encode();
    }

    /// Decode-only graph over a precomputed encoding.
    PolicyGraph(const PolicyModel& model, const EncodedInstance& enc)
        : model_(model), n_(enc.instance.n()), bn_(BnMode::eval), track_params_(false) {
        if (enc.node_emb.shape != std::vector<int>{n_, model.cfg.embedding_dim})
            throw ShapeError("encoded embedding shape mismatch");
        node_emb_ = tape.constant(enc.node_emb);
        graph_emb_ = tape.mean_rows(node_emb_);
    }

    ad::Tape tape;

    ad::Var coords() const { return coords_; }
    const Tensor& node_embedding() const { return tape.val(node_emb_); }

    struct Decoded {
        Tour tour;
        ad::Var log_prob;
    };

    /// Builds the autoregressive decoder. Chooses greedily, by sampling, or
    /// by following a forced tour; returns the visit order and the tape node
    /// holding its total log probability.
    Decoded decode(DecodeMode mode, Rng* rng = nullptr, const Tour* forced = nullptr) {
        using ad::Var;
        const PolicyConfig& cfg = model_.cfg;
        int d = cfg.embedding_dim;
        int H = cfg.heads;
        int dk = d / H;
        if (mode == DecodeMode::sample && rng == nullptr)
            throw ContractError("sampling decode needs a random stream");
        if (forced != nullptr) validate_tour_length(forced->n());

        // Keys and values do not depend on the step; build them once.
        auto split = detail::head_split_indices(n_, H);
        auto heads_of = [&](ad::Var x) {
            return tape.view(tape.gather_rows(tape.view(x, {n_ * H, dk}), split), {H, n_, dk});
        };
        Var kg = heads_of(tape.matmul(node_emb_, param("dec.glimpse.wk")));
        Var vg = heads_of(tape.matmul(node_emb_, param("dec.glimpse.wv")));
        Var kf = tape.matmul(node_emb_, param("dec.final.wk")); // (n, d)

        std::vector<std::uint8_t> visited(static_cast<std::size_t>(n_), 0);
        Decoded out;
        out.tour.order.reserve(static_cast<std::size_t>(n_));
        Var logp{};

        for (int step = 0; step < n_; ++step) {
            Var ctx_first = step == 0 ? param("dec.v_first")
                                      : tape.gather_rows(node_emb_, {out.tour.order.front()});
            Var ctx_last = step == 0 ? param("dec.v_last")
                                     : tape.gather_rows(node_emb_, {out.tour.order.back()});
            Var context = tape.concat({graph_emb_, ctx_first, ctx_last}); // (1, 3d)

            Var q = tape.view(tape.matmul(context, param("dec.glimpse.wq")), {H, 1, dk});
            Var scores = tape.scale(tape.matmul(q, kg, true), 1.0 / std::sqrt(static_cast<double>(dk)));
            if (step > 0) scores = tape.masked_fill(scores, visited, -1e9);
            Var glimpse = tape.matmul(tape.softmax(scores), vg); // (H, 1, dk)
            Var merged = tape.matmul(tape.view(glimpse, {1, d}), param("dec.glimpse.wo"));

            Var qf = tape.matmul(merged, param("dec.final.wq")); // (1, d)
            Var logits = tape.scale(tape.matmul(qf, kf, true), 1.0 / std::sqrt(static_cast<double>(d)));
            logits = tape.scale(tape.tanh(logits), cfg.logit_clip);
            if (step > 0) logits = tape.masked_fill(logits, visited, -1e9);
            Var probs = tape.softmax(logits); // (1, n)

            int chosen = choose(tape.val(probs), visited, mode, rng, forced, step);
            out.tour.order.push_back(chosen);
            visited[static_cast<std::size_t>(chosen)] = 1;

            Var p = tape.gather_rows(tape.view(probs, {n_, 1}), {chosen}); // (1, 1)
            Var lp = tape.log(p);
            logp = step == 0 ? tape.sum(lp) : tape.add(logp, tape.sum(lp));
        }
        out.log_prob = logp;
        return out;
    }

    /// Gradients for every parameter after backward. Parameters the output
    /// does not reach get zeros, keeping optimizer accounting exact.
    GradientMap param_grads() const {
        if (!track_params_) throw ContractError("graph built without parameter tracking");
        GradientMap g;
        for (const auto& [name, t] : model_.store.params) {
            auto it = pvars_.find(name);
            if (it != pvars_.end() && tape.has_grad(it->second))
                g.emplace(name, tape.grad(it->second));
            else
                g.emplace(name, Tensor::zeros(t.shape));
        }
        return g;
    }

    /// Coordinate gradient (n, 2) after backward.
    Tensor coord_grad() const { return tape.grad(coords_); }

    /// Batch statistics of every training-mode normalization in this pass,
    /// in layer order; used to update running statistics.
    const std::vector<std::pair<std::string, ad::BnStats>>& bn_stats() const { return bn_stats_; }

private:
    const PolicyModel& model_;
    int n_;
    BnMode bn_;
    bool track_params_;
    ad::Var coords_{};
    ad::Var node_emb_{};
    ad::Var graph_emb_{};
    std::map<std::string, ad::Var> pvars_;
    std::vector<std::pair<std::string, ad::BnStats>> bn_stats_;

    ad::Var param(const std::string& name) {
        auto it = pvars_.find(name);
        if (it != pvars_.end()) return it->second;
        ad::Var v = tape.leaf(model_.store.param(name), track_params_);
        pvars_.emplace(name, v);
        return v;
    }

    ad::Var batch_norm(ad::Var x, const std::string& prefix) {
        ad::Var g = param(prefix + ".gamma");
        ad::Var b = param(prefix + ".beta");
        if (bn_ == BnMode::train) {
            ad::Var y = tape.batch_norm(x, g, b, true, nullptr, nullptr, model_.cfg.bn_eps);
            bn_stats_.emplace_back(prefix, tape.bn_batch_stats(y));
            return y;
        }
        const Tensor& rm = model_.store.buffer(prefix + ".run_mean");
        const Tensor& rv = model_.store.buffer(prefix + ".run_var");
        return tape.batch_norm(x, g, b, false, &rm, &rv, model_.cfg.bn_eps);
    }

    void encode() {
        using ad::Var;
        const PolicyConfig& cfg = model_.cfg;
        int d = cfg.embedding_dim;
        int H = cfg.heads;
        int dk = d / H;
        auto split = detail::head_split_indices(n_, H);
        auto merge = detail::head_merge_indices(n_, H);
        auto heads_of = [&](Var x) {
            return tape.view(tape.gather_rows(tape.view(x, {n_ * H, dk}), split), {H, n_, dk});
        };

        Var h = tape.add(tape.matmul(coords_, param("embed.w")), param("embed.b"));
        for (int l = 0; l < cfg.encoder_layers; ++l) {
            std::string p = "enc" + std::to_string(l) + ".";
            Var q = heads_of(tape.matmul(h, param(p + "attn.wq")));
            Var k = heads_of(tape.matmul(h, param(p + "attn.wk")));
            Var v = heads_of(tape.matmul(h, param(p + "attn.wv")));
            Var scores = tape.scale(tape.matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(dk)));
            Var ctx = tape.matmul(tape.softmax(scores), v); // (H, n, dk)
            Var mergedrows = tape.gather_rows(tape.view(ctx, {H * n_, dk}), merge);
            Var attn_out = tape.matmul(tape.view(mergedrows, {n_, d}), param(p + "attn.wo"));
            h = batch_norm(tape.add(h, attn_out), p + "bn1");

            Var ff1 = tape.relu(tape.add(tape.matmul(h, param(p + "ff.w1")), param(p + "ff.b1")));
            Var ff2 = tape.add(tape.matmul(ff1, param(p + "ff.w2")), param(p + "ff.b2"));
            h = batch_norm(tape.add(h, ff2), p + "bn2");
        }
        node_emb_ = h;
        graph_emb_ = tape.mean_rows(h);
    }

    void validate_tour_length(int len) const {
        if (len != n_) throw InvalidTourError("forced tour length does not match instance");
    }

    int choose(const Tensor& probs, const std::vector<std::uint8_t>& visited, DecodeMode mode,
               Rng* rng, const Tour* forced, int step) const {
        if (forced != nullptr) {
            int c = forced->order[static_cast<std::size_t>(step)];
            if (c < 0 || c >= n_ || visited[static_cast<std::size_t>(c)])
                throw InvalidTourError("forced tour revisits or exceeds nodes");
            return c;
        }
        if (mode == DecodeMode::greedy) {
            int best = -1;
            double best_p = -1.0;
            for (int j = 0; j < n_; ++j) {
                if (visited[static_cast<std::size_t>(j)]) continue;
                double pj = probs.v[static_cast<std::size_t>(j)];
                if (pj > best_p) {
                    best_p = pj;
                    best = j;
                }
            }
            return best;
        }
        // Sampling over the unvisited support; the visited mass is ~0 but is
        // excluded outright so the tour is valid by construction.
        double total = 0.0;
        for (int j = 0; j < n_; ++j)
            if (!visited[static_cast<std::size_t>(j)]) total += probs.v[static_cast<std::size_t>(j)];
        double u = rng->uniform() * total;
        double acc = 0.0;
        int last_open = -1;
        for (int j = 0; j < n_; ++j) {
            if (visited[static_cast<std::size_t>(j)]) continue;
            last_open = j;
            acc += probs.v[static_cast<std::size_t>(j)];
            if (u < acc) return j;
        }
        return last_open;
    }
};

/// Runs the encoder once and captures the node embeddings.
inline EncodedInstance encode(const PolicyModel& model, const TspInstance& instance, BnMode bn) {
    PolicyGraph g(model, instance, bn);
    EncodedInstance enc;
    enc.instance = instance;
    enc.node_emb = g.node_embedding();
    return enc;
}

/// Decodes a tour from a precomputed encoding. Greedy mode needs no stream.
inline DecodeResult decode(const PolicyModel& model, const EncodedInstance& enc, DecodeMode mode,
                           Rng* rng = nullptr) {
    PolicyGraph g(model, enc);
    auto dec = g.decode(mode, rng);
    DecodeResult r;
    r.tour = std::move(dec.tour);
    r.log_prob = g.tape.val(dec.log_prob).v[0];
    r.cost = tour_cost(enc.instance, r.tour);
    return r;
}

/// Log probability the model assigns to a given tour.
inline double log_prob_of(const PolicyModel& model, const EncodedInstance& enc, const Tour& tour) {
    PolicyGraph g(model, enc);
    auto dec = g.decode(DecodeMode::greedy, nullptr, &tour);
    return g.tape.val(dec.log_prob).v[0];
}

/// Greedy rollout cost with running-statistics normalization.
inline DecodeResult greedy_rollout(const PolicyModel& model, const TspInstance& instance) {
    return decode(model, encode(model, instance, BnMode::eval), DecodeMode::greedy);
}

/// Monte Carlo estimate of the model's expected tour cost: the mean cost of
/// m sampled rollouts. Sampling pipelines normalize with batch statistics.
inline double solver_cost(const PolicyModel& model, const TspInstance& instance, int m, Rng rng) {
    if (m <= 0) throw ConfigError("solver_cost needs at least one rollout");
    EncodedInstance enc = encode(model, instance, BnMode::train);
    double total = 0.0;
    for (int j = 0; j < m; ++j) {
        Rng rj = rng.child(static_cast<std::uint64_t>(j));
        total += decode(model, enc, DecodeMode::sample, &rj).cost;
    }
    return total / static_cast<double>(m);
}

/// Per-instance policy-gradient contribution.
struct InstanceGrad {
    GradientMap grads;
    double sample_cost = 0.0;
    double baseline_cost = 0.0;
    double advantage = 0.0;
    double log_prob = 0.0;
    std::vector<std::pair<std::string, ad::BnStats>> bn_stats;
};

/// REINFORCE gradient per instance: one sampled rollout each, advantage
/// against the supplied baseline cost, gradient of advantage * log p(tour).
/// Instance i draws from rng.child(i), so results do not depend on batch
/// composition or evaluation order.
inline std::vector<InstanceGrad> reinforce_gradient(const PolicyModel& model,
                                                    const std::vector<TspInstance>& batch,
                                                    const std::vector<double>& baseline_costs,
                                                    Rng rng) {
    if (batch.size() != baseline_costs.size())
        throw ContractError("baseline cost count does not match batch");
    std::vector<InstanceGrad> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Rng ri = rng.child(static_cast<std::uint64_t>(i));
        PolicyGraph g(model, batch[i], BnMode::train, /*track_params=*/true);
        auto dec = g.decode(DecodeMode::sample, &ri);
        InstanceGrad& ig = out[i];
        ig.sample_cost = tour_cost(batch[i], dec.tour);
        ig.baseline_cost = baseline_costs[i];
        ig.advantage = ig.sample_cost - ig.baseline_cost;
        ig.log_prob = g.tape.val(dec.log_prob).v[0];
        g.tape.backward(g.tape.scale(dec.log_prob, ig.advantage));
        ig.grads = g.param_grads();
        ig.bn_stats = g.bn_stats();
    }
    return out;
}

/// Folds per-instance batch statistics into the model's running statistics,
/// in index order, weighted by bn_momentum.
inline void merge_bn_stats(PolicyModel& model, const std::vector<InstanceGrad>& grads) {
    double mom = model.cfg.bn_momentum;
    for (const auto& ig : grads) {
        for (const auto& [prefix, stats] : ig.bn_stats) {
            Tensor& rm = model.store.buffer(prefix + ".run_mean");
            Tensor& rv = model.store.buffer(prefix + ".run_var");
            for (std::size_t j = 0; j < rm.v.size(); ++j) {
                rm.v[j] = mom * rm.v[j] + (1.0 - mom) * stats.mean.v[j];
                rv.v[j] = mom * rv.v[j] + (1.0 - mom) * stats.var.v[j];
            }
        }
    }
}

} // namespace hardtsp
