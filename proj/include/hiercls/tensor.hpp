#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "hiercls/error.hpp"

namespace hiercls {

/// Dense row-major array of doubles. Rank 1 or 2 is all the library needs.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)),
          data(std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<>()),
               0.0) {}

    static Tensor scalar(double v) {
        Tensor t(std::vector<std::size_t>{});
        t.data.assign(1, v);
        return t;
    }

    static Tensor vector1d(std::vector<double> values) {
        Tensor t;
        t.shape = {values.size()};
        t.data = std::move(values);
        return t;
    }

    static Tensor matrix(std::size_t rows, std::size_t cols,
                         std::vector<double> values) {
        Tensor t;
        t.shape = {rows, cols};
        if (values.size() != rows * cols)
            throw error("Tensor::matrix: " + std::to_string(values.size()) +
                        " values for a " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " matrix");
        t.data = std::move(values);
        return t;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    bool is_scalar() const { return shape.empty() && data.size() == 1; }

    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

} // namespace hiercls
