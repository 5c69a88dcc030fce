#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hardtsp/errors.hpp"
#include "hardtsp/tensor.hpp"

namespace hardtsp::ad {

enum class Op {
    leaf,
    add,
    sub,
    mul,
    matmul,
    softmax,
    tanh_fn,
    relu,
    log_fn,
    sqrt_fn,
    mean_all,
    sum_all,
    mean_rows,
    sum_rows,
    gather_rows,
    concat,
    batch_norm,
    masked_fill,
    scale,
    view,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::matmul: return "matmul";
        case Op::softmax: return "softmax";
        case Op::tanh_fn: return "tanh";
        case Op::relu: return "relu";
        case Op::log_fn: return "log";
        case Op::sqrt_fn: return "sqrt";
        case Op::mean_all: return "mean";
        case Op::sum_all: return "sum";
        case Op::mean_rows: return "mean_rows";
        case Op::sum_rows: return "sum_rows";
        case Op::gather_rows: return "gather_rows";
        case Op::concat: return "concat";
        case Op::batch_norm: return "batch_norm";
        case Op::masked_fill: return "masked_fill";
        case Op::scale: return "scale";
        case Op::view: return "view";
    }
    return "?";
}

/// Handle into a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

struct BnStats {
    Tensor mean;
    Tensor var;
};

/// Reverse-mode tape. Operations record nodes in topological order; backward
/// runs one reverse sweep from a scalar output. Every forward result is
/// scanned for non-finite values, which throw NumericError immediately so a
/// NaN cannot propagate silently. A tape supports exactly one backward pass
/// and rejects further building afterwards.
class Tape {
public:
    struct Node {
        Op op = Op::leaf;
        int a = -1, b = -1, c = -1;
        std::vector<int> rest; // concat inputs beyond the first two
        Tensor val;
        bool requires_grad = false;

        double factor = 0.0; // scale multiplier or masked_fill value
        bool transpose_b = false;
        std::vector<int> indices;        // gather_rows
        std::vector<std::uint8_t> mask;  // masked_fill, tiled over leading dims

        // batch_norm saved state
        Tensor bn_xhat;
        Tensor bn_invstd;
        Tensor bn_mean, bn_var; // normalization stats (batch stats in training mode)
        bool bn_training = false;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int size() const { return static_cast<int>(nodes_.size()); }
    bool consumed() const { return consumed_; }

    const Tensor& val(Var v) const { return node(v).val; }

    /// Gradient of the backward output with respect to v. Only meaningful
    /// after backward(); absent gradients (constants, unreached nodes) throw.
    const Tensor& grad(Var v) const {
        if (!consumed_) throw ContractError("grad requested before backward");
        const Tensor& g = grads_[static_cast<std::size_t>(check(v))];
        if (g.v.empty() && node(v).val.numel() > 0)
            throw ContractError("no gradient recorded for this variable");
        return g;
    }

    bool has_grad(Var v) const {
        return consumed_ && !grads_[static_cast<std::size_t>(check(v))].v.empty();
    }

    Var leaf(Tensor t, bool requires_grad = false) {
        Node n;
        n.op = Op::leaf;
        n.val = std::move(t);
        n.requires_grad = requires_grad;
        return push(std::move(n), /*scan=*/false);
    }

    Var constant(Tensor t) { return leaf(std::move(t), false); }

    Var add(Var a, Var b) { return binary(Op::add, a, b); }
    Var sub(Var a, Var b) { return binary(Op::sub, a, b); }
    Var mul(Var a, Var b) { return binary(Op::mul, a, b); }

    /// Matrix product. With a of shape (..., m, k):
    ///  - rank-2 b: (k, n), or (n, k) with transpose_b, applied to every
    ///    leading slice of a;
    ///  - higher-rank b: leading dimensions must match a's and each slice is
    ///    multiplied pairwise.
    Var matmul(Var a, Var b, bool transpose_b = false) {
        const Tensor& ta = node(a).val;
        const Tensor& tb = node(b).val;
        if (ta.shape.size() < 2 || tb.shape.size() < 2) throw ShapeError("matmul needs rank >= 2");
        int m = ta.shape[ta.shape.size() - 2];
        int k = ta.shape.back();
        int n = 0;
        if (tb.shape.size() == 2) {
            n = transpose_b ? tb.shape[0] : tb.shape[1];
            int kb = transpose_b ? tb.shape[1] : tb.shape[0];
            if (kb != k) throw ShapeError("matmul inner dimensions disagree: " + ta.shape_str() + " vs " + tb.shape_str());
        } else {
            if (tb.shape.size() != ta.shape.size())
                throw ShapeError("batched matmul rank mismatch");
            for (std::size_t i = 0; i + 2 < ta.shape.size(); ++i)
                if (ta.shape[i] != tb.shape[i]) throw ShapeError("batched matmul leading dimensions disagree");
            n = transpose_b ? tb.shape[tb.shape.size() - 2] : tb.shape.back();
            int kb = transpose_b ? tb.shape.back() : tb.shape[tb.shape.size() - 2];
            if (kb != k) throw ShapeError("matmul inner dimensions disagree: " + ta.shape_str() + " vs " + tb.shape_str());
        }

        Node out;
        out.op = Op::matmul;
        out.a = a.id;
        out.b = b.id;
        out.transpose_b = transpose_b;
        std::vector<int> shape(ta.shape.begin(), ta.shape.end() - 2);
        shape.push_back(m);
        shape.push_back(n);
        out.val = Tensor::zeros(shape);

        std::int64_t batches = out.val.numel() / (static_cast<std::int64_t>(m) * n);
        for (std::int64_t bi = 0; bi < batches; ++bi) {
            const double* pa = ta.v.data() + bi * static_cast<std::int64_t>(m) * k;
            const double* pb = tb.shape.size() == 2
                                   ? tb.v.data()
                                   : tb.v.data() + bi * static_cast<std::int64_t>(n) * k;
            double* pc = out.val.v.data() + bi * static_cast<std::int64_t>(m) * n;
            if (transpose_b)
                gemm(pa, k, 1, pb, 1, k, pc, m, n, k, /*acc=*/false);
            else
                gemm(pa, k, 1, pb, n, 1, pc, m, n, k, /*acc=*/false);
        }
        out.requires_grad = node(a).requires_grad || node(b).requires_grad;
        return push(std::move(out));
    }

    /// Softmax over the trailing dimension, numerically stabilized.
    Var softmax(Var x) {
        const Tensor& t = node(x).val;
        if (t.cols() == 0) throw ShapeError("softmax over empty dimension");
        Node out;
        out.op = Op::softmax;
        out.a = x.id;
        out.val = t;
        int c = t.cols();
        std::int64_t rows = t.rows();
        for (std::int64_t r = 0; r < rows; ++r) {
            double* row = out.val.v.data() + r * c;
            double mx = row[0];
            for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (int j = 0; j < c; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            for (int j = 0; j < c; ++j) row[j] /= sum;
        }
        out.requires_grad = node(x).requires_grad;
        return push(std::move(out));
    }

    Var tanh(Var x) { return unary(Op::tanh_fn, x, [](double v) { return std::tanh(v); }); }
    Var relu(Var x) { return unary(Op::relu, x, [](double v) { return v > 0.0 ? v : 0.0; }); }
    Var log(Var x) { return unary(Op::log_fn, x, [](double v) { return std::log(v); }); }
    Var sqrt(Var x) { return unary(Op::sqrt_fn, x, [](double v) { return std::sqrt(v); }); }

    Var mean(Var x) { return reduce(Op::mean_all, x); }
    Var sum(Var x) { return reduce(Op::sum_all, x); }
    Var mean_rows(Var x) { return reduce(Op::mean_rows, x); }
    Var sum_rows(Var x) { return reduce(Op::sum_rows, x); }

    /// Picks rows of x (viewed as rows() x cols()) by index, with repeats
    /// allowed. Output shape is (indices.size(), cols).
    Var gather_rows(Var x, std::vector<int> indices) {
        const Tensor& t = node(x).val;
        if (t.shape.size() < 2) throw ShapeError("gather_rows needs rank >= 2");
        int c = t.cols();
        std::int64_t rows = t.rows();
        Node out;
        out.op = Op::gather_rows;
        out.a = x.id;
        out.val = Tensor::zeros({static_cast<int>(indices.size()), c});
        for (std::size_t i = 0; i < indices.size(); ++i) {
            int r = indices[i];
            if (r < 0 || r >= rows) throw ShapeError("gather_rows index out of range");
            const double* src = t.v.data() + static_cast<std::int64_t>(r) * c;
            double* dst = out.val.v.data() + static_cast<std::int64_t>(i) * c;
            for (int j = 0; j < c; ++j) dst[j] = src[j];
        }
        out.indices = std::move(indices);
        out.requires_grad = node(x).requires_grad;
        return push(std::move(out));
    }

    /// Concatenates along the trailing dimension; leading shapes must match.
    Var concat(const std::vector<Var>& xs) {
        if (xs.empty()) throw ShapeError("concat of nothing");
        const Tensor& first = node(xs[0]).val;
        std::vector<int> lead(first.shape.begin(), first.shape.end() - 1);
        int total = 0;
        for (Var v : xs) {
            const Tensor& t = node(v).val;
            if (t.shape.empty()) throw ShapeError("concat needs rank >= 1");
            if (!std::equal(lead.begin(), lead.end(), t.shape.begin(), t.shape.end() - 1))
                throw ShapeError("concat leading dimensions disagree");
            total += t.shape.back();
        }
        Node out;
        out.op = Op::concat;
        out.a = xs[0].id;
        if (xs.size() > 1) out.b = xs[1].id;
        if (xs.size() > 2) out.c = xs[2].id;
        for (std::size_t i = 3; i < xs.size(); ++i) out.rest.push_back(xs[i].id);
        std::vector<int> shape = lead;
        shape.push_back(total);
        out.val = Tensor::zeros(shape);
        std::int64_t rows = out.val.rows();
        int offset = 0;
        for (Var v : xs) {
            const Tensor& t = node(v).val;
            int c = t.shape.back();
            for (std::int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < c; ++j)
                    out.val.v[static_cast<std::size_t>(r * total + offset + j)] =
                        t.v[static_cast<std::size_t>(r * c + j)];
            offset += c;
        }
        for (Var v : xs) out.requires_grad = out.requires_grad || node(v).requires_grad;
        return push(std::move(out));
    }

    /// Feature normalization over rows (the batch dimension). Training mode
    /// normalizes with the batch statistics of x and records them; evaluation
    /// mode normalizes with the provided running statistics.
    Var batch_norm(Var x, Var gamma, Var beta, bool training, const Tensor* running_mean = nullptr,
                   const Tensor* running_var = nullptr, double eps = 1e-5) {
        const Tensor& t = node(x).val;
        if (t.shape.size() != 2) throw ShapeError("batch_norm expects (rows, features)");
        int c = t.cols();
        std::int64_t rows = t.rows();
        if (rows < 1) throw ShapeError("batch_norm over zero rows");
        const Tensor& g = node(gamma).val;
        const Tensor& b = node(beta).val;
        if (g.numel() != c || b.numel() != c) throw ShapeError("batch_norm parameter size mismatch");
        if (!training && (running_mean == nullptr || running_var == nullptr))
            throw ContractError("batch_norm evaluation mode needs running statistics");
        if (!training && (running_mean->numel() != c || running_var->numel() != c))
            throw ShapeError("batch_norm running statistics size mismatch");

        Node out;
        out.op = Op::batch_norm;
        out.a = x.id;
        out.b = gamma.id;
        out.c = beta.id;
        out.bn_training = training;
        out.val = Tensor::zeros(t.shape);
        out.bn_xhat = Tensor::zeros(t.shape);
        out.bn_invstd = Tensor::zeros({c});
        out.bn_mean = Tensor::zeros({c});
        out.bn_var = Tensor::zeros({c});
        for (int j = 0; j < c; ++j) {
            double mu, var;
            if (training) {
                mu = 0.0;
                for (std::int64_t r = 0; r < rows; ++r) mu += t.v[static_cast<std::size_t>(r * c + j)];
                mu /= static_cast<double>(rows);
                var = 0.0;
                for (std::int64_t r = 0; r < rows; ++r) {
                    double d = t.v[static_cast<std::size_t>(r * c + j)] - mu;
                    var += d * d;
                }
                var /= static_cast<double>(rows);
            } else {
                mu = running_mean->v[static_cast<std::size_t>(j)];
                var = running_var->v[static_cast<std::size_t>(j)];
            }
            double invstd = 1.0 / std::sqrt(var + eps);
            out.bn_mean.v[static_cast<std::size_t>(j)] = mu;
            out.bn_var.v[static_cast<std::size_t>(j)] = var;
            out.bn_invstd.v[static_cast<std::size_t>(j)] = invstd;
            for (std::int64_t r = 0; r < rows; ++r) {
                double xh = (t.v[static_cast<std::size_t>(r * c + j)] - mu) * invstd;
                out.bn_xhat.v[static_cast<std::size_t>(r * c + j)] = xh;
                out.val.v[static_cast<std::size_t>(r * c + j)] =
                    g.v[static_cast<std::size_t>(j)] * xh + b.v[static_cast<std::size_t>(j)];
            }
        }
        out.requires_grad = node(x).requires_grad || node(gamma).requires_grad || node(beta).requires_grad;
        return push(std::move(out));
    }

    /// Batch statistics recorded by a training-mode batch_norm node.
    BnStats bn_batch_stats(Var bn) const {
        const Node& n = node(bn);
        if (n.op != Op::batch_norm || !n.bn_training)
            throw ContractError("bn_batch_stats wants a training-mode batch_norm node");
        return {n.bn_mean, n.bn_var};
    }

    /// Replaces masked positions with a fill value. The mask length must
    /// divide the tensor size and is tiled over leading dimensions; the usual
    /// case masks the trailing dimension of every row.
    Var masked_fill(Var x, const std::vector<std::uint8_t>& mask, double value) {
        const Tensor& t = node(x).val;
        if (mask.empty() || t.numel() % static_cast<std::int64_t>(mask.size()) != 0)
            throw ShapeError("mask length must divide tensor size");
        Node out;
        out.op = Op::masked_fill;
        out.a = x.id;
        out.factor = value;
        out.mask = mask;
        out.val = t;
        std::size_t m = mask.size();
        for (std::size_t i = 0; i < out.val.v.size(); ++i)
            if (mask[i % m]) out.val.v[i] = value;
        out.requires_grad = node(x).requires_grad;
        return push(std::move(out));
    }

    Var scale(Var x, double factor) {
        Node out;
        out.op = Op::scale;
        out.a = x.id;
        out.factor = factor;
        out.val = node(x).val;
        for (double& v : out.val.v) v *= factor;
        out.requires_grad = node(x).requires_grad;
        return push(std::move(out));
    }

    /// Reinterprets the value with a new shape of equal size. No data moves.
    Var view(Var x, std::vector<int> shape) {
        const Tensor& t = node(x).val;
        if (Tensor::numel_of(shape) != t.numel()) throw ShapeError("view size mismatch");
        Node out;
        out.op = Op::view;
        out.a = x.id;
        out.val = Tensor(std::move(shape), t.v);
        out.requires_grad = node(x).requires_grad;
        return push(std::move(out), /*scan=*/false);
    }

    /// Reverse sweep from a scalar output. One shot per tape.
    void backward(Var out) {
        if (consumed_) throw ContractError("tape already consumed by backward");
        const Node& top = node(out);
        if (top.val.numel() != 1) throw ContractError("backward needs a scalar output");
        if (!top.requires_grad) throw ContractError("output does not depend on any differentiable leaf");

        grads_.assign(nodes_.size(), Tensor{});
        ensure_grad(out.id).v[0] = 1.0;

        for (int id = out.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (!n.requires_grad) continue;
            Tensor& g = grads_[static_cast<std::size_t>(id)];
            if (g.v.empty()) continue; // not an ancestor of the output
            backward_node(n, g);
        }
        consumed_ = true;
    }

private:
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool consumed_ = false;

    const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(check(v))]; }
    Node& node(Var v) { return nodes_[static_cast<std::size_t>(check(v))]; }

    int check(Var v) const {
        if (!v.valid() || v.id >= size()) throw ContractError("variable from another tape or uninitialized");
        return v.id;
    }

    Var push(Node n, bool scan = true) {
        if (consumed_) throw ContractError("tape already consumed by backward");
        if (scan)
            for (double v : n.val.v)
                if (!std::isfinite(v))
                    throw NumericError(std::string("non-finite value from ") + op_name(n.op));
        nodes_.push_back(std::move(n));
        return Var{size() - 1};
    }

    template <typename Fn>
    Var unary(Op op, Var x, Fn&& fn) {
        Node out;
        out.op = op;
        out.a = x.id;
        out.val = node(x).val;
        for (double& v : out.val.v) v = fn(v);
        out.requires_grad = node(x).requires_grad;
        return push(std::move(out));
    }

    Var reduce(Op op, Var x) {
        const Tensor& t = node(x).val;
        Node out;
        out.op = op;
        out.a = x.id;
        if (op == Op::mean_all || op == Op::sum_all) {
            if (t.numel() == 0) throw ShapeError("reduction over empty tensor");
            double s = 0.0;
            for (double v : t.v) s += v;
            if (op == Op::mean_all) s /= static_cast<double>(t.numel());
            out.val = Tensor::scalar(s);
        } else {
            if (t.shape.size() < 2) throw ShapeError("row reduction needs rank >= 2");
            int c = t.cols();
            std::int64_t rows = t.rows();
            if (rows == 0) throw ShapeError("reduction over empty tensor");
            out.val = Tensor::zeros({1, c});
            for (std::int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < c; ++j) out.val.v[static_cast<std::size_t>(j)] += t.v[static_cast<std::size_t>(r * c + j)];
            if (op == Op::mean_rows)
                for (double& v : out.val.v) v /= static_cast<double>(rows);
        }
        out.requires_grad = node(x).requires_grad;
        return push(std::move(out));
    }

    Var binary(Op op, Var a, Var b) {
        const Tensor& ta = node(a).val;
        const Tensor& tb = node(b).val;
        if (!suffix_broadcastable(ta, tb))
            throw ShapeError(std::string(op_name(op)) + " shapes incompatible: " + ta.shape_str() +
                             " vs " + tb.shape_str());
        Node out;
        out.op = op;
        out.a = a.id;
        out.b = b.id;
        out.val = ta;
        std::size_t nb = tb.v.size();
        for (std::size_t i = 0; i < out.val.v.size(); ++i) {
            double rhs = tb.v[i % nb];
            if (op == Op::add)
                out.val.v[i] += rhs;
            else if (op == Op::sub)
                out.val.v[i] -= rhs;
            else
                out.val.v[i] *= rhs;
        }
        out.requires_grad = node(a).requires_grad || node(b).requires_grad;
        return push(std::move(out));
    }

    /// b must have the same shape as a, or a shape equal to a trailing
    /// suffix of a's shape (tiled over the leading dimensions).
    static bool suffix_broadcastable(const Tensor& a, const Tensor& b) {
        if (b.shape.size() > a.shape.size()) return false;
        auto off = a.shape.size() - b.shape.size();
        for (std::size_t i = 0; i < b.shape.size(); ++i)
            if (a.shape[off + i] != b.shape[i]) return false;
        return true;
    }

    Tensor& ensure_grad(int id) {
        Tensor& g = grads_[static_cast<std::size_t>(id)];
        if (g.v.empty()) g = Tensor::zeros(nodes_[static_cast<std::size_t>(id)].val.shape);
        return g;
    }

    void accumulate(int id, const Tensor& delta) {
        if (id < 0) return;
        if (!nodes_[static_cast<std::size_t>(id)].requires_grad) return;
        Tensor& g = ensure_grad(id);
        for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] += delta.v[i];
    }

    bool wants_grad(int id) const {
        return id >= 0 && nodes_[static_cast<std::size_t>(id)].requires_grad;
    }

    /// C(m,n) += or = A(m,k) * B(k,n) with arbitrary strides, covering the
    /// transposed variants without copies.
    static void gemm(const double* A, std::int64_t a_rs, std::int64_t a_cs, const double* B,
                     std::int64_t b_rs, std::int64_t b_cs, double* C, int m, int n, int k, bool acc) {
        if (!acc)
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(m) * n; ++i) C[i] = 0.0;
        for (int i = 0; i < m; ++i) {
            double* crow = C + static_cast<std::int64_t>(i) * n;
            for (int t = 0; t < k; ++t) {
                double av = A[i * a_rs + t * a_cs];
                if (av == 0.0) continue;
                const double* brow = B + t * b_rs;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j * b_cs];
            }
        }
    }

    void backward_node(Node& n, const Tensor& g) {
        switch (n.op) {
            case Op::leaf:
                return;
            case Op::add:
            case Op::sub:
            case Op::mul: {
                const Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].val;
                const Tensor& tb = nodes_[static_cast<std::size_t>(n.b)].val;
                std::size_t nb = tb.v.size();
                if (wants_grad(n.a)) {
                    Tensor& ga = ensure_grad(n.a);
                    for (std::size_t i = 0; i < g.v.size(); ++i)
                        ga.v[i] += n.op == Op::mul ? g.v[i] * tb.v[i % nb] : g.v[i];
                }
                if (wants_grad(n.b)) {
                    Tensor& gb = ensure_grad(n.b);
                    for (std::size_t i = 0; i < g.v.size(); ++i) {
                        double d = g.v[i];
                        if (n.op == Op::sub)
                            d = -d;
                        else if (n.op == Op::mul)
                            d = d * ta.v[i];
                        gb.v[i % nb] += d;
                    }
                }
                return;
            }
            case Op::matmul: {
                const Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].val;
                const Tensor& tb = nodes_[static_cast<std::size_t>(n.b)].val;
                int m = ta.shape[ta.shape.size() - 2];
                int k = ta.shape.back();
                int nn = n.val.shape.back();
                std::int64_t batches = n.val.numel() / (static_cast<std::int64_t>(m) * nn);
                bool b_is_2d = tb.shape.size() == 2;
                Tensor* ga = wants_grad(n.a) ? &ensure_grad(n.a) : nullptr;
                Tensor* gb = wants_grad(n.b) ? &ensure_grad(n.b) : nullptr;
                for (std::int64_t bi = 0; bi < batches; ++bi) {
                    const double* pg = g.v.data() + bi * static_cast<std::int64_t>(m) * nn;
                    const double* pa = ta.v.data() + bi * static_cast<std::int64_t>(m) * k;
                    const double* pb = b_is_2d ? tb.v.data() : tb.v.data() + bi * static_cast<std::int64_t>(nn) * k;
                    if (ga) {
                        double* pga = ga->v.data() + bi * static_cast<std::int64_t>(m) * k;
                        if (n.transpose_b)
                            gemm(pg, nn, 1, pb, k, 1, pga, m, k, nn, /*acc=*/true); // g(m,n) * B(n,k)
                        else
                            gemm(pg, nn, 1, pb, 1, nn, pga, m, k, nn, /*acc=*/true); // g(m,n) * B^T
                    }
                    if (gb) {
                        double* pgb = b_is_2d ? gb->v.data() : gb->v.data() + bi * static_cast<std::int64_t>(nn) * k;
                        if (n.transpose_b)
                            gemm(pg, 1, nn, pa, k, 1, pgb, nn, k, m, /*acc=*/true); // g^T(n,m) * A(m,k)
                        else
                            gemm(pa, 1, k, pg, nn, 1, pgb, k, nn, m, /*acc=*/true); // A^T(k,m) * g(m,n)
                    }
                }
                return;
            }
            case Op::softmax: {
                if (!wants_grad(n.a)) return;
                Tensor& ga = ensure_grad(n.a);
                int c = n.val.cols();
                std::int64_t rows = n.val.rows();
                for (std::int64_t r = 0; r < rows; ++r) {
                    const double* y = n.val.v.data() + r * c;
                    const double* gr = g.v.data() + r * c;
                    double dot = 0.0;
                    for (int j = 0; j < c; ++j) dot += gr[j] * y[j];
                    double* out = ga.v.data() + r * c;
                    for (int j = 0; j < c; ++j) out[j] += y[j] * (gr[j] - dot);
                }
                return;
            }
            case Op::tanh_fn: {
                if (!wants_grad(n.a)) return;
                Tensor& ga = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.v.size(); ++i)
                    ga.v[i] += g.v[i] * (1.0 - n.val.v[i] * n.val.v[i]);
                return;
            }
            case Op::relu: {
                if (!wants_grad(n.a)) return;
                Tensor& ga = ensure_grad(n.a);
                const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].val;
                for (std::size_t i = 0; i < g.v.size(); ++i)
                    if (x.v[i] > 0.0) ga.v[i] += g.v[i];
                return;
            }
            case Op::log_fn: {
                if (!wants_grad(n.a)) return;
                Tensor& ga = ensure_grad(n.a);
                const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].val;
                for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] / x.v[i];
                return;
            }
            case Op::sqrt_fn: {
                if (!wants_grad(n.a)) return;
                Tensor& ga = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.v.size(); ++i)
                    ga.v[i] += g.v[i] * 0.5 / n.val.v[i];
                return;
            }
            case Op::mean_all:
            case Op::sum_all: {
                if (!wants_grad(n.a)) return;
                Tensor& ga = ensure_grad(n.a);
                double d = g.v[0];
                if (n.op == Op::mean_all) d /= static_cast<double>(ga.numel());
                for (double& v : ga.v) v += d;
                return;
            }
            case Op::mean_rows:
            case Op::sum_rows: {
                if (!wants_grad(n.a)) return;
                Tensor& ga = ensure_grad(n.a);
                int c = ga.cols();
                std::int64_t rows = ga.rows();
                double inv = n.op == Op::mean_rows ? 1.0 / static_cast<double>(rows) : 1.0;
                for (std::int64_t r = 0; r < rows; ++r)
                    for (int j = 0; j < c; ++j) ga.v[static_cast<std::size_t>(r * c + j)] += g.v[static_cast<std::size_t>(j)] * inv;
                return;
            }
            case Op::gather_rows: {
                if (!wants_grad(n.a)) return;
                Tensor& ga = ensure_grad(n.a);
                int c = ga.cols();
                for (std::size_t i = 0; i < n.indices.size(); ++i) {
                    double* dst = ga.v.data() + static_cast<std::int64_t>(n.indices[i]) * c;
                    const double* src = g.v.data() + static_cast<std::int64_t>(i) * c;
                    for (int j = 0; j < c; ++j) dst[j] += src[j];
                }
                return;
            }
            case Op::concat: {
                std::vector<int> inputs;
                inputs.push_back(n.a);
                if (n.b >= 0) inputs.push_back(n.b);
                if (n.c >= 0) inputs.push_back(n.c);
                for (int id : n.rest) inputs.push_back(id);
                int total = n.val.shape.back();
                std::int64_t rows = n.val.rows();
                int offset = 0;
                for (int id : inputs) {
                    const Tensor& t = nodes_[static_cast<std::size_t>(id)].val;
                    int c = t.shape.back();
                    if (wants_grad(id)) {
                        Tensor& gi = ensure_grad(id);
                        for (std::int64_t r = 0; r < rows; ++r)
                            for (int j = 0; j < c; ++j)
                                gi.v[static_cast<std::size_t>(r * c + j)] +=
                                    g.v[static_cast<std::size_t>(r * total + offset + j)];
                    }
                    offset += c;
                }
                return;
            }
            case Op::batch_norm: {
                int c = n.val.cols();
                std::int64_t rows = n.val.rows();
                const Tensor& gamma = nodes_[static_cast<std::size_t>(n.b)].val;
                for (int j = 0; j < c; ++j) {
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (std::int64_t r = 0; r < rows; ++r) {
                        double gv = g.v[static_cast<std::size_t>(r * c + j)];
                        sum_g += gv;
                        sum_gx += gv * n.bn_xhat.v[static_cast<std::size_t>(r * c + j)];
                    }
                    if (wants_grad(n.b)) ensure_grad(n.b).v[static_cast<std::size_t>(j)] += sum_gx;
                    if (wants_grad(n.c)) ensure_grad(n.c).v[static_cast<std::size_t>(j)] += sum_g;
                    if (wants_grad(n.a)) {
                        Tensor& ga = ensure_grad(n.a);
                        double gj = gamma.v[static_cast<std::size_t>(j)];
                        double invstd = n.bn_invstd.v[static_cast<std::size_t>(j)];
                        if (n.bn_training) {
                            double inv_rows = 1.0 / static_cast<double>(rows);
                            for (std::int64_t r = 0; r < rows; ++r) {
                                double gv = g.v[static_cast<std::size_t>(r * c + j)];
                                double xh = n.bn_xhat.v[static_cast<std::size_t>(r * c + j)];
                                ga.v[static_cast<std::size_t>(r * c + j)] +=
                                    gj * invstd * (gv - sum_g * inv_rows - xh * sum_gx * inv_rows);
                            }
                        } else {
                            for (std::int64_t r = 0; r < rows; ++r)
                                ga.v[static_cast<std::size_t>(r * c + j)] +=
                                    g.v[static_cast<std::size_t>(r * c + j)] * gj * invstd;
                        }
                    }
                }
                return;
            }
            case Op::masked_fill: {
                if (!wants_grad(n.a)) return;
                Tensor& ga = ensure_grad(n.a);
                std::size_t m = n.mask.size();
                for (std::size_t i = 0; i < g.v.size(); ++i)
                    if (!n.mask[i % m]) ga.v[i] += g.v[i];
                return;
            }
            case Op::scale: {
                if (!wants_grad(n.a)) return;
                Tensor& ga = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * n.factor;
                return;
            }
            case Op::view: {
                if (!wants_grad(n.a)) return;
                Tensor& ga = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
                return;
            }
        }
    }
};

} // namespace hardtsp::ad
