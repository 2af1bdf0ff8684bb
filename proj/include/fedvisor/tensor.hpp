#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fedvisor/common.hpp"

namespace fedvisor {

// Dense row-major matrix of doubles. Small enough at desk scale that we do
// not need a BLAS-backed type.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return data.size(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool operator==(const Matrix& o) const = default;
};

inline bool all_finite(const Matrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// y = W x + b
inline void affine(const Matrix& w, const std::vector<double>& b,
                   const std::vector<double>& x, std::vector<double>& y) {
    if (w.cols != x.size() || w.rows != b.size())
        throw ShapeError("affine: dimension mismatch");
    y.assign(w.rows, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
        double acc = 0.0;
        const double* wr = &w.data[r * w.cols];
        for (std::size_t c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
        y[r] = acc + b[r];
    }
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace fedvisor
