#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "hardtsp/errors.hpp"

namespace hardtsp {

/// Dense row-major tensor of doubles. A scalar has an empty shape and one
/// value; for every tensor the product of the shape equals the value count.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> values) : shape(std::move(s)), v(std::move(values)) {
        if (numel_of(shape) != static_cast<std::int64_t>(v.size()))
            throw ShapeError("tensor values do not match shape");
    }

    static std::int64_t numel_of(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw ShapeError("negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        auto n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    }

    static Tensor full(std::vector<int> s, double value) {
        auto n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), value));
    }

    static Tensor scalar(double value) { return Tensor({}, {value}); }

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }

    /// Size of the trailing dimension; 1 for scalars.
    int cols() const { return shape.empty() ? 1 : shape.back(); }

    /// Everything but the trailing dimension, flattened.
    std::int64_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

    double& at(std::int64_t i) { return v[static_cast<std::size_t>(i)]; }
    double at(std::int64_t i) const { return v[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

} // namespace hardtsp
