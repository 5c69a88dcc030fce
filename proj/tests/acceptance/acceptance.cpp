// Acceptance gate for the hardness-adaptive TSP training stack.
//
// Each criterion prints exactly one PASS/FAIL line with its measured wall
// time; a criterion also fails if it exceeds its runtime budget. Progress
// chatter goes to stderr so stdout stays one line per criterion.
//
// Usage:
//   acceptance            run every criterion in order
//   acceptance c3 c9      run a subset
//
// Exit code 0 iff every selected criterion passed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "hardtsp/baseline.hpp"
#include "hardtsp/curriculum.hpp"
#include "hardtsp/evaluate.hpp"
#include "hardtsp/generators.hpp"
#include "hardtsp/metrics.hpp"
#include "hardtsp/policy.hpp"
#include "hardtsp/solvers.hpp"
#include "hardtsp/tsp.hpp"

#ifndef HARDTSP_CLI_PATH
#error "HARDTSP_CLI_PATH must point at the hardtsp executable"
#endif

namespace {

using namespace hardtsp;
namespace fs = std::filesystem;

constexpr std::uint64_t kSeed = 9001; // master stream for every criterion

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) {
    va_list ap;
    va_start(ap, f);
    char buf[512];
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

void progress(const std::string& msg) {
    std::fprintf(stderr, "  .. %s\n", msg.c_str());
    std::fflush(stderr);
}

// ---------------------------------------------------------------------------
// c1: exact solver agrees with exhaustive enumeration on n in {5..8}.

double enumerated_optimum(const TspInstance& inst) {
    int n = inst.n();
    std::vector<int> perm(static_cast<std::size_t>(n - 1));
    std::iota(perm.begin(), perm.end(), 1);
    double best = std::numeric_limits<double>::infinity();
    Tour t;
    do {
        t.order.assign(1, 0);
        t.order.insert(t.order.end(), perm.begin(), perm.end());
        best = std::min(best, tour_cost(inst, t));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

Outcome run_c1() {
    Rng root = Rng(kSeed).child("c1");
    int checked = 0;
    double worst = 0.0;
    for (int n = 5; n <= 8; ++n) {
        auto set = gen_uniform(n, 100, root.child(static_cast<std::uint64_t>(n)));
        for (const auto& inst : set) {
            Solution s = solve_exact(inst);
            double ref = enumerated_optimum(inst);
            double diff = std::abs(s.cost - ref);
            worst = std::max(worst, diff);
            if (diff > 1e-9)
                return {false, fmt("exact solver off enumeration by %.3e on an n=%d instance", diff, n)};
            if (std::abs(tour_cost(inst, s.tour) - s.cost) > 1e-12)
                return {false, fmt("reported cost does not match the reported tour at n=%d", n)};
            ++checked;
        }
    }
    return {true, fmt("dynamic program matches enumeration on %d instances, n 5..8, worst |diff| %.2e",
                      checked, worst)};
}

// ---------------------------------------------------------------------------
// c2: every tape op, the end-to-end policy loss, and tour_cost_gradient
// against central finite differences.

Tensor rand_tensor(std::vector<int> shape, Rng& r, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.v) v = r.uniform(lo, hi);
    return t;
}

Tensor rand_direction(const Tensor& like, Rng& r) {
    Tensor d = Tensor::zeros(like.shape);
    double norm = 0.0;
    for (double& v : d.v) {
        v = r.normal();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : d.v) v /= norm;
    return d;
}

struct FdCase {
    std::string name;
    std::vector<Tensor> inputs;
    // Builds a scalar loss from leaves standing in for `inputs`.
    std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)> build;
};

double fd_case_loss(const FdCase& c, const std::vector<Tensor>& xs) {
    ad::Tape t;
    std::vector<ad::Var> vs;
    vs.reserve(xs.size());
    for (const auto& x : xs) vs.push_back(t.leaf(x, false));
    return t.val(c.build(t, vs)).v[0];
}

// Max relative error between analytic directional derivatives and central
// differences over `dirs` random directions of every input.
double fd_case_error(const FdCase& c, Rng r, int dirs, double h) {
    ad::Tape t;
    std::vector<ad::Var> vs;
    for (const auto& x : c.inputs) vs.push_back(t.leaf(x, true));
    t.backward(c.build(t, vs));
    std::vector<Tensor> grads;
    for (std::size_t k = 0; k < vs.size(); ++k)
        grads.push_back(t.has_grad(vs[k]) ? t.grad(vs[k]) : Tensor::zeros(c.inputs[k].shape));

    double worst = 0.0;
    for (std::size_t k = 0; k < c.inputs.size(); ++k) {
        for (int d = 0; d < dirs; ++d) {
            Tensor dir = rand_direction(c.inputs[k], r);
            auto shifted = [&](double sign) {
                std::vector<Tensor> xs = c.inputs;
                for (std::size_t j = 0; j < dir.v.size(); ++j) xs[k].v[j] += sign * h * dir.v[j];
                return fd_case_loss(c, xs);
            };
            double fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
            double an = 0.0;
            for (std::size_t j = 0; j < dir.v.size(); ++j) an += grads[k].v[j] * dir.v[j];
            double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

std::vector<FdCase> op_cases(Rng& r) {
    std::vector<FdCase> cs;
    auto weighted_sum = [](ad::Tape& t, ad::Var out, const Tensor& w) {
        return t.sum(t.mul(out, t.leaf(w)));
    };

    auto away_from = [&](std::vector<int> shape, double margin) {
        Tensor t = rand_tensor(std::move(shape), r);
        for (double& v : t.v) v += v >= 0.0 ? margin : -margin;
        return t;
    };

    {
        Tensor w = rand_tensor({3, 4}, r);
        cs.push_back({"add", {rand_tensor({3, 4}, r), rand_tensor({3, 4}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.add(v[0], v[1]), w);
                      }});
        cs.push_back({"sub", {rand_tensor({3, 4}, r), rand_tensor({3, 4}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.sub(v[0], v[1]), w);
                      }});
        cs.push_back({"mul", {rand_tensor({3, 4}, r), rand_tensor({3, 4}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.mul(v[0], v[1]), w);
                      }});
    }
    {
        Tensor w = rand_tensor({3, 5}, r);
        cs.push_back({"matmul", {rand_tensor({3, 4}, r), rand_tensor({4, 5}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.matmul(v[0], v[1]), w);
                      }});
        cs.push_back({"matmul-transposed", {rand_tensor({3, 4}, r), rand_tensor({5, 4}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.matmul(v[0], v[1], true), w);
                      }});
    }
    {
        Tensor w = rand_tensor({4, 6}, r);
        cs.push_back({"softmax", {rand_tensor({4, 6}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.softmax(v[0]), w);
                      }});
    }
    {
        Tensor w = rand_tensor({3, 5}, r);
        cs.push_back({"tanh", {rand_tensor({3, 5}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.tanh(v[0]), w);
                      }});
        cs.push_back({"relu", {away_from({3, 5}, 0.2)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.relu(v[0]), w);
                      }});
        cs.push_back({"log", {rand_tensor({3, 5}, r, 0.3, 1.5)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.log(v[0]), w);
                      }});
        cs.push_back({"sqrt", {rand_tensor({3, 5}, r, 0.25, 1.5)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.sqrt(v[0]), w);
                      }});
    }
    cs.push_back({"mean", {rand_tensor({3, 5}, r)},
                  [](ad::Tape& t, const std::vector<ad::Var>& v) { return t.mean(v[0]); }});
    cs.push_back({"sum", {rand_tensor({3, 5}, r)},
                  [](ad::Tape& t, const std::vector<ad::Var>& v) { return t.sum(v[0]); }});
    {
        Tensor w = rand_tensor({1, 5}, r);
        cs.push_back({"mean-rows", {rand_tensor({4, 5}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.mean_rows(v[0]), w);
                      }});
        cs.push_back({"sum-rows", {rand_tensor({4, 5}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.sum_rows(v[0]), w);
                      }});
    }
    {
        Tensor w = rand_tensor({4, 4}, r);
        cs.push_back({"gather-rows", {rand_tensor({5, 4}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.gather_rows(v[0], {2, 0, 2, 4}), w);
                      }});
    }
    {
        Tensor w = rand_tensor({2, 9}, r);
        cs.push_back({"concat", {rand_tensor({2, 3}, r), rand_tensor({2, 4}, r), rand_tensor({2, 2}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.concat({v[0], v[1], v[2]}), w);
                      }});
    }
    {
        Tensor w = rand_tensor({6, 4}, r);
        cs.push_back({"batch-norm", {rand_tensor({6, 4}, r), rand_tensor({1, 4}, r, 0.5, 1.5), rand_tensor({1, 4}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.batch_norm(v[0], v[1], v[2], true, nullptr, nullptr, 1e-5), w);
                      }});
    }
    {
        Tensor w = rand_tensor({2, 5}, r);
        std::vector<std::uint8_t> mask = {0, 1, 0, 0, 1};
        cs.push_back({"masked-fill", {rand_tensor({2, 5}, r)},
                      [w, weighted_sum, mask](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.masked_fill(v[0], mask, -3.0), w);
                      }});
        cs.push_back({"scale", {rand_tensor({2, 5}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.scale(v[0], 1.7), w);
                      }});
    }
    {
        Tensor w = rand_tensor({3, 4}, r);
        cs.push_back({"view", {rand_tensor({2, 6}, r)},
                      [w, weighted_sum](ad::Tape& t, const std::vector<ad::Var>& v) {
                          return weighted_sum(t, t.view(v[0], {3, 4}), w);
                      }});
    }
    return cs;
}

// Flattened parameter editing in name order (maps iterate sorted).
void nudge_params(PolicyModel& m, const std::vector<double>& dir, double scale) {
    std::size_t at = 0;
    for (auto& [name, t] : m.store.params)
        for (double& v : t.v) v += scale * dir[at++];
}

std::size_t param_count(const PolicyModel& m) {
    std::size_t n = 0;
    for (const auto& [name, t] : m.store.params) n += t.v.size();
    return n;
}

std::vector<double> param_direction(const PolicyModel& m, Rng& r) {
    std::vector<double> d(param_count(m));
    double norm = 0.0;
    for (double& v : d) {
        v = r.normal();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : d) v /= norm;
    return d;
}

double grad_dot(const GradientMap& g, const std::vector<double>& dir) {
    std::size_t at = 0;
    double acc = 0.0;
    for (const auto& [name, t] : g)
        for (double v : t.v) acc += v * dir[at++];
    return acc;
}

// REINFORCE surrogate objective with frozen tours and frozen baselines:
//   L(theta) = sum_i (C_i - b_i) log p_theta(tour_i | X_i).
// Its parameter gradient is the policy-gradient estimate for those samples.
double policy_loss_value(const PolicyModel& m, const std::vector<TspInstance>& xs,
                         const std::vector<Tour>& tours, const std::vector<double>& adv) {
    double L = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        L += adv[i] * log_prob_of(m, encode(m, xs[i], BnMode::train), tours[i]);
    return L;
}

Outcome run_c2() {
    Rng root = Rng(kSeed).child("c2");
    const int dirs = 20;
    const double h = 1e-5;

    Rng gen = root.child("ops");
    double worst_op = 0.0;
    std::string worst_name = "-";
    auto cases = op_cases(gen);
    for (const auto& c : cases) {
        double e = fd_case_error(c, root.child(c.name), dirs, h);
        if (e > worst_op) {
            worst_op = e;
            worst_name = c.name;
        }
        if (e > 1e-4)
            return {false, fmt("op %s directional gradient off finite differences by %.2e", c.name.c_str(), e)};
    }
    progress(fmt("c2: %zu ops clean, worst %s at %.1e", cases.size(), worst_name.c_str(), worst_op));

    // End-to-end policy loss, parameters and coordinates.
    PolicyConfig pc;
    pc.embedding_dim = 16;
    pc.heads = 2;
    pc.encoder_layers = 2;
    pc.ff_dim = 32;
    PolicyModel model = PolicyModel::init(pc, root.child("model").seed());
    auto xs = gen_uniform(8, 2, root.child("instances"));
    std::vector<Tour> tours;
    std::vector<double> adv;
    Rng sample = root.child("tours");
    for (const auto& x : xs) {
        auto dec = decode(model, encode(model, x, BnMode::train), DecodeMode::sample, &sample);
        tours.push_back(dec.tour);
        adv.push_back(dec.cost - greedy_rollout(model, x).cost);
    }

    GradientMap analytic = zero_gradients(model.store);
    std::vector<Tensor> coord_grads;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        PolicyGraph g(model, xs[i], BnMode::train, true, true);
        auto dec = g.decode(DecodeMode::greedy, nullptr, &tours[i]);
        g.tape.backward(dec.log_prob);
        axpy_gradients(analytic, g.param_grads(), adv[i]);
        Tensor cg = g.coord_grad();
        for (double& v : cg.v) v *= adv[i];
        coord_grads.push_back(std::move(cg));
    }

    double worst_theta = 0.0;
    Rng dtheta = root.child("theta-dirs");
    for (int d = 0; d < dirs; ++d) {
        auto dir = param_direction(model, dtheta);
        auto shifted = [&](double sign) {
            PolicyModel m2 = model;
            nudge_params(m2, dir, sign * h);
            return policy_loss_value(m2, xs, tours, adv);
        };
        double fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        double an = grad_dot(analytic, dir);
        double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
        worst_theta = std::max(worst_theta, rel);
        if (rel > 1e-4)
            return {false, fmt("policy loss parameter gradient off finite differences by %.2e", rel)};
    }

    // Coordinate gradient of the log-probability term, instance 0.
    double worst_coord = 0.0;
    Rng dc = root.child("coord-dirs");
    for (int d = 0; d < 10; ++d) {
        Tensor dir = rand_direction(Tensor::zeros({xs[0].n(), 2}), dc);
        auto shifted = [&](double sign) {
            TspInstance x2 = xs[0];
            for (int i = 0; i < x2.n(); ++i) {
                x2.nodes[static_cast<std::size_t>(i)].x += sign * h * dir.v[static_cast<std::size_t>(2 * i)];
                x2.nodes[static_cast<std::size_t>(i)].y += sign * h * dir.v[static_cast<std::size_t>(2 * i + 1)];
            }
            return adv[0] * log_prob_of(model, encode(model, x2, BnMode::train), tours[0]);
        };
        double fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        double an = 0.0;
        for (std::size_t j = 0; j < coord_grads[0].v.size(); ++j) an += coord_grads[0].v[j] * dir.v[j];
        double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
        worst_coord = std::max(worst_coord, rel);
        if (rel > 1e-4)
            return {false, fmt("policy loss coordinate gradient off finite differences by %.2e", rel)};
    }

    // Tour length derivative at the tighter tolerance.
    double worst_tc = 0.0;
    {
        auto inst = gen_uniform(10, 1, root.child("tc-instance"))[0];
        Tour t;
        t.order.resize(10);
        std::iota(t.order.begin(), t.order.end(), 0);
        Rng shuf = root.child("tc-shuffle");
        for (int i = 9; i > 0; --i) std::swap(t.order[static_cast<std::size_t>(i)],
                                              t.order[static_cast<std::size_t>(shuf.uniform_int(0, i))]);
        auto g = tour_cost_gradient(inst, t);
        Rng dg = root.child("tc-dirs");
        for (int d = 0; d < dirs; ++d) {
            Tensor dir = rand_direction(Tensor::zeros({10, 2}), dg);
            auto shifted = [&](double sign) {
                TspInstance x2 = inst;
                for (int i = 0; i < 10; ++i) {
                    x2.nodes[static_cast<std::size_t>(i)].x += sign * 1e-6 * dir.v[static_cast<std::size_t>(2 * i)];
                    x2.nodes[static_cast<std::size_t>(i)].y += sign * 1e-6 * dir.v[static_cast<std::size_t>(2 * i + 1)];
                }
                return tour_cost(x2, t);
            };
            double fd = (shifted(1.0) - shifted(-1.0)) / 2e-6;
            double an = 0.0;
            for (int i = 0; i < 10; ++i)
                an += g[static_cast<std::size_t>(i)].x * dir.v[static_cast<std::size_t>(2 * i)] +
                      g[static_cast<std::size_t>(i)].y * dir.v[static_cast<std::size_t>(2 * i + 1)];
            double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
            worst_tc = std::max(worst_tc, rel);
            if (rel > 1e-5)
                return {false, fmt("tour length gradient off finite differences by %.2e", rel)};
        }
    }
    return {true, fmt("%zu ops + policy loss + tour gradient match finite differences "
                      "(worst op %.1e, loss %.1e, tour %.1e)",
                      cases.size(), worst_op, std::max(worst_theta, worst_coord), worst_tc)};
}

// ---------------------------------------------------------------------------
// c3: hardness never exceeds the optimality gap computed from the shared
// solver-cost estimate.

Outcome run_c3() {
    Rng root = Rng(kSeed).child("c3");
    PolicyModel model = PolicyModel::init(PolicyConfig::desk(), root.child("model").seed());

    struct Setting {
        int steps;
        double lr;
        int rollouts;
    };
    const Setting settings[] = {{1, 0.0, 4}, {1, 1e-3, 8}, {2, 0.02, 8}, {1, 0.1, 4}, {3, 0.05, 2}};

    int checked = 0, positive = 0;
    double worst_margin = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < std::size(settings); ++s) {
        auto batch = gen_uniform(10, 100, root.child("data", s));
        SurrogateConfig sc;
        sc.inner_steps = settings[s].steps;
        sc.inner_lr = settings[s].lr;
        PolicyModel sur = surrogate_update(model, batch, sc, root.child("sur", s));
        for (std::size_t i = 0; i < batch.size(); ++i) {
            auto rep = hardness(batch[i], model, sur, settings[s].rollouts, root.child("roll", s, i));
            double opt = solve_exact(batch[i]).cost;
            double gap = (rep.solver_cost - opt) / opt; // same estimate on both sides
            double margin = gap - rep.hardness;
            if (checked == 0 || margin < worst_margin) worst_margin = margin;
            if (rep.hardness > gap + 1e-9)
                return {false, fmt("hardness %.6f exceeds gap %.6f (setting %zu, instance %zu)",
                                   rep.hardness, gap, s, i)};
            if (rep.hardness > 0.0) ++positive;
            ++checked;
        }
    }
    return {true, fmt("H <= G + 1e-9 on %d/500 instances over 5 surrogate settings "
                      "(%d strictly positive, tightest slack %.2e)",
                      checked, positive, worst_margin)};
}

// ---------------------------------------------------------------------------
// c4: expected REINFORCE estimator equals the gradient of expected cost.

Outcome run_c4() {
    Rng root = Rng(kSeed).child("c4");
    PolicyConfig pc;
    pc.embedding_dim = 8;
    pc.heads = 2;
    pc.encoder_layers = 1;
    pc.ff_dim = 16;
    PolicyModel model = PolicyModel::init(pc, root.child("model").seed());
    TspInstance inst = gen_uniform(4, 1, root.child("instance"))[0];

    std::vector<Tour> tours;
    {
        std::vector<int> perm = {0, 1, 2, 3};
        std::sort(perm.begin(), perm.end());
        do {
            Tour t;
            t.order = perm;
            tours.push_back(t);
        } while (std::next_permutation(perm.begin(), perm.end()));
    }

    auto expected_cost = [&](const PolicyModel& m) {
        EncodedInstance enc = encode(m, inst, BnMode::train);
        double total_p = 0.0, ec = 0.0;
        for (const auto& t : tours) {
            double p = std::exp(log_prob_of(m, enc, t));
            total_p += p;
            ec += p * tour_cost(inst, t);
        }
        if (std::abs(total_p - 1.0) > 1e-9)
            throw ContractError("decode probabilities do not sum to one");
        return ec;
    };

    double b = greedy_rollout(model, inst).cost;
    GradientMap expected_grad = zero_gradients(model.store);
    for (const auto& t : tours) {
        PolicyGraph g(model, inst, BnMode::train, true);
        auto dec = g.decode(DecodeMode::greedy, nullptr, &t);
        double logp = g.tape.val(dec.log_prob).v[0];
        g.tape.backward(dec.log_prob);
        axpy_gradients(expected_grad, g.param_grads(),
                       std::exp(logp) * (tour_cost(inst, t) - b));
    }

    const double h = 1e-5;
    double worst = 0.0;
    Rng dgen = root.child("dirs");
    for (int d = 0; d < 20; ++d) {
        auto dir = param_direction(model, dgen);
        auto shifted = [&](double sign) {
            PolicyModel m2 = model;
            nudge_params(m2, dir, sign * h);
            return expected_cost(m2);
        };
        double fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        double an = grad_dot(expected_grad, dir);
        double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
        worst = std::max(worst, rel);
        if (rel > 1e-3)
            return {false, fmt("expected estimator off d/dtheta E[C] by %.2e", rel)};
    }
    return {true, fmt("expected estimator matches d/dtheta E[C] over all 24 decode paths, "
                      "20 directions, worst %.1e", worst)};
}

// ---------------------------------------------------------------------------
// Warm models shared by c5-c7: uniform-only training at n = 20.

constexpr int kWarmEpochs = 120;
constexpr int kWarmPerEpoch = 512;
constexpr int kWarmBatch = 128;
constexpr double kWarmLr = 1e-4;

TrainConfig warm_config(std::uint64_t seed) {
    TrainConfig c;
    c.n = 20;
    c.policy = PolicyConfig::desk();
    c.use_hag = false;
    c.use_curriculum = false;
    c.epochs = kWarmEpochs;
    c.warmup_epochs = 1;
    c.instances_per_epoch = kWarmPerEpoch;
    c.batch_size = kWarmBatch;
    c.learning_rate = kWarmLr;
    c.eval_instances = 64;
    c.baseline_instances = 64;
    c.seed = seed;
    return c;
}

// The trained artifact is the run's significance-tested best model (the
// rollout baseline copy), the strongest greedy policy the run certifies.
const PolicyModel& warm_model(std::uint64_t seed) {
    static std::map<std::uint64_t, PolicyModel> cache;
    auto it = cache.find(seed);
    if (it != cache.end()) return it->second;
    progress(fmt("training warm model, seed %llu (%d x %d instances)",
                 static_cast<unsigned long long>(seed), kWarmEpochs, kWarmPerEpoch));
    TrainResult r = run_training(warm_config(seed));
    progress(fmt("warm model seed %llu: final heldout gap %.4f",
                 static_cast<unsigned long long>(seed), r.metrics.back().heldout.mean));
    return cache.emplace(seed, std::move(r.baseline_model)).first->second;
}

double mean_exact_gap(const PolicyModel& m, const std::vector<TspInstance>& xs) {
    double acc = 0.0;
    for (const auto& x : xs) acc += optimality_gap(greedy_rollout(m, x).cost, solve_exact(x).cost);
    return acc / static_cast<double>(xs.size());
}

const std::uint64_t kWarmSeeds[] = {1, 2, 3};

// c5: uniform-trained model quality plus the distribution-shift trend.

Outcome run_c5() {
    Rng root = Rng(kSeed).child("c5");
    std::string detail;
    bool pass = true;
    for (std::uint64_t seed : kWarmSeeds) {
        const PolicyModel& m = warm_model(seed);
        auto uni = gen_uniform(20, 500, root.child("uniform", seed));
        double base_gap = mean_exact_gap(m, uni);

        double gaps[3];
        const double cdist[3] = {10.0, 50.0, 100.0};
        for (int k = 0; k < 3; ++k) {
            GmmConfig g;
            g.n = 20;
            g.c_dist = cdist[k];
            auto xs = gen_gaussian_mixture(g, 500, root.child("gmm", seed, static_cast<std::uint64_t>(k)));
            gaps[k] = mean_exact_gap(m, xs);
        }
        bool quality = base_gap < 0.05;
        bool trend = gaps[0] < gaps[1] && gaps[1] < gaps[2];
        pass = pass && quality && trend;
        detail += fmt("%sseed %llu: uniform %.3f%s, gmm %.3f/%.3f/%.3f%s",
                      detail.empty() ? "" : "; ",
                      static_cast<unsigned long long>(seed), base_gap, quality ? "" : " (>=5%)",
                      gaps[0], gaps[1], gaps[2], trend ? "" : " (not increasing)");
        progress(fmt("c5 seed %llu done", static_cast<unsigned long long>(seed)));
    }
    return {pass, detail};
}

// c6: hardness-adaptive instances at eta = 5 are at least twice as hard.

HagConfig hag_config(double eta) {
    HagConfig h;
    h.n = 20;
    h.eta = eta;
    h.steps = 4;
    h.rollouts = 8;
    h.surrogate.inner_steps = 1;
    h.surrogate.inner_lr = 0.01;
    return h;
}

Outcome run_c6() {
    Rng root = Rng(kSeed).child("c6");
    double uni_sum = 0.0, hag_sum = 0.0;
    std::string detail;
    for (std::uint64_t seed : kWarmSeeds) {
        const PolicyModel& m = warm_model(seed);
        // Paired comparison: eta = 0 reproduces exactly the uniform draws the
        // ascent starts from, so the ratio isolates the ascent's effect.
        auto uni = gen_hardness_adaptive(m, hag_config(0.0), 200, root.child("hag", seed));
        auto hag = gen_hardness_adaptive(m, hag_config(5.0), 200, root.child("hag", seed));
        double gu = mean_exact_gap(m, uni);
        double gh = mean_exact_gap(m, hag);
        uni_sum += gu;
        hag_sum += gh;
        detail += fmt("%sseed %llu: uniform %.3f vs adaptive %.3f (x%.1f)",
                      detail.empty() ? "" : "; ",
                      static_cast<unsigned long long>(seed), gu, gh, gh / std::max(gu, 1e-12));
        progress(fmt("c6 seed %llu done", static_cast<unsigned long long>(seed)));
    }
    bool pass = hag_sum >= 2.0 * uni_sum;
    detail += fmt("; pooled ratio x%.2f", hag_sum / std::max(uni_sum, 1e-12));
    return {pass, detail};
}

// c7: mean gap is non-decreasing in the ascent step size.

Outcome run_c7() {
    Rng root = Rng(kSeed).child("c7");
    const double etas[3] = {0.1, 1.0, 5.0};
    bool pass = true;
    std::string detail;
    for (std::uint64_t seed : kWarmSeeds) {
        const PolicyModel& m = warm_model(seed);
        double gaps[3];
        for (int k = 0; k < 3; ++k) {
            // One stream per seed: every eta ascends the same uniform starts.
            auto xs = gen_hardness_adaptive(m, hag_config(etas[k]), 200, root.child("hag", seed));
            gaps[k] = mean_exact_gap(m, xs);
        }
        bool mono = gaps[0] <= gaps[1] && gaps[1] <= gaps[2];
        pass = pass && mono;
        detail += fmt("%sseed %llu: %.3f / %.3f / %.3f%s", detail.empty() ? "" : "; ",
                      static_cast<unsigned long long>(seed), gaps[0], gaps[1], gaps[2],
                      mono ? "" : " (decreasing)");
        progress(fmt("c7 seed %llu done", static_cast<unsigned long long>(seed)));
    }
    return {pass, detail};
}

// ---------------------------------------------------------------------------
// c8: curriculum + adaptive generation beats uniform training out of
// distribution at a matched instance budget, without a variance penalty.

TrainConfig c8_config(std::uint64_t seed, bool hag, bool curriculum) {
    TrainConfig c;
    c.n = 20;
    c.policy = PolicyConfig::desk();
    c.use_hag = hag;
    c.use_curriculum = curriculum;
    c.epochs = 30;
    c.warmup_epochs = 4;
    c.instances_per_epoch = 1024;
    c.batch_size = 128;
    c.hard_fraction = 0.5;
    c.learning_rate = 1e-4;
    c.hardness_rollouts = 4;
    c.surrogate.inner_steps = 1;
    c.surrogate.inner_lr = 0.01;
    c.hag = hag_config(5.0);
    c.hag.steps = 1;
    c.hag.rollouts = 4;
    c.schedule.t_start = 5.0;
    c.schedule.t_end = 0.5;
    c.schedule.decay = 0.85;
    c.eval_instances = 64;
    c.eval_source = EvalSource::gmm;
    c.eval_gmm.n = 20;
    c.eval_gmm.c_dist = 50.0;
    c.baseline_instances = 64;
    c.seed = seed;
    return c;
}

Outcome run_c8() {
    const std::uint64_t seeds[5] = {11, 12, 13, 14, 15};
    double full[5], uniform[5], hag_only[5];
    for (int i = 0; i < 5; ++i) {
        std::uint64_t s = seeds[i];
        full[i] = run_training(c8_config(s, true, true)).metrics.back().heldout.mean;
        progress(fmt("c8 seed %llu curriculum+adaptive: %.4f", (unsigned long long)s, full[i]));
        uniform[i] = run_training(c8_config(s, false, false)).metrics.back().heldout.mean;
        progress(fmt("c8 seed %llu uniform: %.4f", (unsigned long long)s, uniform[i]));
        hag_only[i] = run_training(c8_config(s, true, false)).metrics.back().heldout.mean;
        progress(fmt("c8 seed %llu adaptive-only: %.4f", (unsigned long long)s, hag_only[i]));
    }
    int wins = 0;
    for (int i = 0; i < 5; ++i) wins += full[i] < uniform[i] ? 1 : 0;
    auto variance = [](const double* g) {
        double m = 0.0;
        for (int i = 0; i < 5; ++i) m += g[i];
        m /= 5.0;
        double v = 0.0;
        for (int i = 0; i < 5; ++i) v += (g[i] - m) * (g[i] - m);
        return v / 4.0;
    };
    double var_full = variance(full), var_hag = variance(hag_only);
    bool pass = wins >= 4 && var_full <= var_hag;
    std::string detail = fmt("curriculum+adaptive beats uniform on %d/5 seeds; "
                             "cross-seed variance %.2e vs adaptive-only %.2e",
                             wins, var_full, var_hag);
    return {pass, detail};
}

// ---------------------------------------------------------------------------
// c9: curriculum weight algebra.

Outcome run_c9() {
    Rng root = Rng(kSeed).child("c9");

    // Weight properties on 1,000 randomized batches.
    for (int cse = 0; cse < 1000; ++cse) {
        Rng r = root.child("alg", static_cast<std::uint64_t>(cse));
        int k = r.uniform_int(2, 16);
        std::vector<double> h(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i)
            h[static_cast<std::size_t>(i)] = 0.05 * i + r.uniform(0.0, 0.04); // distinct by construction
        for (int i = k - 1; i > 0; --i)
            std::swap(h[static_cast<std::size_t>(i)], h[static_cast<std::size_t>(r.uniform_int(0, i))]);
        std::size_t argmax = static_cast<std::size_t>(
            std::max_element(h.begin(), h.end()) - h.begin());

        CurriculumSchedule sched;
        sched.t_start = r.uniform(0.5, 8.0);
        CurriculumState st = CurriculumState::init(sched);

        double prev_top = -1.0;
        for (double T : {8.0, 4.0, 2.0, 1.0, 0.5, 0.25}) {
            st.temperature = T;
            auto w = sample_weights(h, st);
            double sum = std::accumulate(w.begin(), w.end(), 0.0);
            if (std::abs(sum - 1.0) > 1e-12)
                return {false, fmt("weights sum to 1%+.2e at T=%.2f (case %d)", sum - 1.0, T, cse)};
            for (double wi : w)
                if (!(wi >= 0.0))
                    return {false, fmt("negative weight at T=%.2f (case %d)", T, cse)};
            std::size_t wmax = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
            if (wmax != argmax)
                return {false, fmt("argmax not preserved at T=%.2f (case %d)", T, cse)};
            if (!(w[argmax] > prev_top))
                return {false, fmt("argmax weight failed to sharpen at T=%.2f (case %d)", T, cse)};
            prev_top = w[argmax];
        }
    }

    // Uniform-weight steps against the explicit mean-gradient step.
    double worst_param = 0.0;
    for (int cse = 0; cse < 100; ++cse) {
        Rng r = root.child("step", static_cast<std::uint64_t>(cse));
        PolicyConfig pc;
        pc.embedding_dim = 16;
        pc.heads = 2;
        pc.encoder_layers = 1;
        pc.ff_dim = 32;
        PolicyModel a = PolicyModel::init(pc, r.child("init").seed());
        PolicyModel b = a;
        int bsz = r.uniform_int(2, 6);
        auto batch = gen_uniform(8, bsz, r.child("batch"));
        PolicyModel frozen = a;
        auto bc = greedy_costs(frozen, batch);
        AdamConfig adam;
        adam.lr = 1e-3;

        std::vector<double> w(batch.size(), 1.0 / static_cast<double>(bsz));
        weighted_train_step(a, batch, w, bc, adam, 1.0, r.child("rng"));

        auto grads = reinforce_gradient(b, batch, bc, r.child("rng"));
        GradientMap mean = zero_gradients(b.store);
        for (const auto& ig : grads) axpy_gradients(mean, ig.grads, 1.0);
        for (auto& [name, t] : mean)
            for (double& v : t.v) v /= static_cast<double>(bsz);
        clip_gradient_norm(mean, 1.0);
        adam_step(b.store, mean, adam);
        merge_bn_stats(b, grads);

        for (const auto& [name, t] : a.store.params) {
            const Tensor& u = b.store.params.at(name);
            for (std::size_t j = 0; j < t.v.size(); ++j)
                worst_param = std::max(worst_param, std::abs(t.v[j] - u.v[j]));
        }
        for (const auto& [name, t] : a.store.buffers) {
            const Tensor& u = b.store.buffers.at(name);
            for (std::size_t j = 0; j < t.v.size(); ++j)
                worst_param = std::max(worst_param, std::abs(t.v[j] - u.v[j]));
        }
        if (worst_param > 1e-12)
            return {false, fmt("uniform step diverges from mean step by %.2e (case %d)", worst_param, cse)};
    }
    return {true, fmt("1,000 weight batches sum/sharpen cleanly; 100 uniform steps within %.1e of mean steps",
                      std::max(worst_param, 0.0))};
}

// ---------------------------------------------------------------------------
// c10: byte-identical artifacts across reruns.

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(HARDTSP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
}

// Metrics lines with the wall-clock field zeroed; the one field allowed to
// differ between identical runs.
std::string masked_metrics(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot read " + p.string());
    std::string line, out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        j["seconds"] = 0.0;
        out += j.dump();
        out += '\n';
    }
    return out;
}

Outcome run_c10() {
    fs::path base = fs::temp_directory_path() / "hardtsp_acceptance_c10";
    fs::remove_all(base);
    fs::create_directories(base);
    const std::string train_flags =
        " --n 8 --epochs 3 --warmup-epochs 1 --instances-per-epoch 16 --batch-size 4"
        " --learning-rate 1e-3 --hardness-rollouts 2 --hag-steps 1 --hag-rollouts 2"
        " --inner-lr 1e-3 --eval-instances 4 --baseline-instances 4 --decay 0.5 --seed 97";

    for (int run = 0; run < 2; ++run) {
        fs::path d = base / ("run" + std::to_string(run));
        fs::create_directories(d);
        if (run_cli("generate --gen uniform --n 12 --count 24 --seed 5 --out " +
                    (d / "uniform.tsph").string()) != 0)
            return {false, "uniform generation failed"};
        if (run_cli("generate --gen gmm --n 12 --count 24 --cdist 30 --seed 5 --out " +
                    (d / "gmm.tsph").string()) != 0)
            return {false, "mixture generation failed"};
        if (run_cli("train --out " + (d / "train").string() + train_flags) != 0)
            return {false, "training run failed"};
        if (run_cli("generate --gen hag --n 8 --count 8 --eta 2 --steps 1 --rollouts 2 --seed 5"
                    " --model " + (d / "train" / "model.htck").string() +
                    " --out " + (d / "hag.tsph").string()) != 0)
            return {false, "hardness-adaptive generation failed"};
    }

    fs::path a = base / "run0", b = base / "run1";
    for (const char* f : {"uniform.tsph", "gmm.tsph", "hag.tsph"})
        if (slurp(a / f) != slurp(b / f))
            return {false, fmt("dataset %s differs between identical runs", f)};
    for (const char* f : {"train/model.htck", "train/baseline.htck", "train/state.json"})
        if (slurp(a / f) != slurp(b / f))
            return {false, fmt("artifact %s differs between identical runs", f)};
    if (masked_metrics(a / "train" / "metrics.jsonl") != masked_metrics(b / "train" / "metrics.jsonl"))
        return {false, "metrics differ between identical runs"};
    return {true, "datasets (uniform/gmm/adaptive), checkpoints, state, and metrics are byte-identical "
                  "across reruns (wall-clock seconds field masked)"};
}

// ---------------------------------------------------------------------------

struct Criterion {
    const char* id;
    double budget_s; // 0: no limit of its own
    Outcome (*fn)();
};

const Criterion kCriteria[] = {
    {"c1", 60.0, run_c1},   {"c2", 120.0, run_c2}, {"c3", 300.0, run_c3},
    {"c4", 120.0, run_c4},  {"c5", 3600.0, run_c5}, {"c6", 1800.0, run_c6},
    {"c7", 1800.0, run_c7}, {"c8", 7200.0, run_c8}, {"c9", 60.0, run_c9},
    {"c10", 0.0, run_c10},
};

} // namespace

int main(int argc, char** argv) {
    std::vector<std::string> want(argv + 1, argv + argc);
    for (const auto& w : want) {
        bool known = false;
        for (const auto& c : kCriteria) known = known || w == c.id;
        if (!known) {
            std::fprintf(stderr, "unknown criterion: %s\n", w.c_str());
            return 2;
        }
    }

    bool all_ok = true;
    for (const auto& c : kCriteria) {
        if (!want.empty() && std::find(want.begin(), want.end(), c.id) == want.end()) continue;
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("unexpected error: ") + e.what()};
        }
        double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool over = c.budget_s > 0.0 && dt > c.budget_s;
        bool pass = o.pass && !over;
        std::printf("%s %s: %s (%.1f s%s)\n", pass ? "PASS" : "FAIL", c.id, o.detail.c_str(), dt,
                    over ? ", over budget" : "");
        std::fflush(stdout);
        all_ok = all_ok && pass;
    }
    return all_ok ? 0 : 1;
}
