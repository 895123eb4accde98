#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace vidmem {

// Dense row-major tensor of doubles. Verification runs in double so
// finite-difference checks have enough headroom.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0);
    }
    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != data.size())
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto e : s) n *= e;
        return n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t ndim() const { return shape.size(); }

    // 2D view helpers: all leading dims collapsed onto rows, last dim = cols.
    std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
    std::size_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

    double& at2(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at2(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    bool all_finite() const;

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
    static std::string shape_str(const std::vector<std::size_t>& s);
};

// Learnable value with its accumulated gradient.
struct Param {
    Tensor value;
    Tensor grad;
    std::string name;

    Param() = default;
    Param(std::string n, Tensor v) : value(std::move(v)), grad(Tensor::zeros(value.shape)), name(std::move(n)) {}

    void zero_grad() { grad.fill(0.0); }
};

}  // namespace vidmem
