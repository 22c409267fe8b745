// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major f64 tensor plus shape helpers shared by the whole library.
#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsg {

class WsgError : public std::runtime_error {
public:
    explicit WsgError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)) {
        data.assign(numel_of(shape), fill);
    }

    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel_of(shape)) {
            throw WsgError("tensor: data length " + std::to_string(data.size()) +
                           " does not match shape product " + std::to_string(numel_of(shape)));
        }
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vec(std::vector<double> d) {
        std::size_t n = d.size();
        return Tensor({n}, std::move(d));
    }

    static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> d) {
        return Tensor({r, c}, std::move(d));
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    bool is_scalar() const { return numel() == 1; }

    std::size_t rows() const {
        if (rank() != 2) throw WsgError("tensor: rows() on non-matrix");
        return shape[0];
    }
    std::size_t cols() const {
        if (rank() != 2) throw WsgError("tensor: cols() on non-matrix");
        return shape[1];
    }

    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i)
            os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw WsgError(std::string(op) + ": shape mismatch " + a.shape_str() +
                       " vs " + b.shape_str());
    }
}

}  // namespace wsg
