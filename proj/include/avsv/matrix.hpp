// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "avsv/errors.hpp"

namespace avsv {

// Dense 2-D double-precision matrix, row-major.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
        if (rows <= 0 || cols <= 0)
            throw ContractError("Matrix dims must be positive, got " + shape_str(rows, cols));
    }
    Matrix(int rows, int cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows <= 0 || cols <= 0)
            throw ContractError("Matrix dims must be positive, got " + shape_str(rows, cols));
        if (data_.size() != static_cast<size_t>(rows) * cols)
            throw ContractError("Matrix data length " + std::to_string(data_.size()) +
                                " does not match " + shape_str(rows, cols));
    }

    static Matrix zeros(int rows, int cols) { return Matrix(rows, cols, 0.0); }
    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    std::string shape() const { return shape_str(rows_, cols_); }
    static std::string shape_str(int r, int c) {
        return std::to_string(r) + "x" + std::to_string(c);
    }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul shape mismatch: " + a.shape() + " * " + b.shape());
    Matrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int t = 0; t < a.cols(); ++t) {
            double aval = a.at(i, t);
            if (aval == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) c.at(i, j) += aval * b.at(t, j);
        }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw DimensionError("add shape mismatch: " + a.shape() + " vs " + b.shape());
    Matrix c = a;
    for (size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (size_t i = 0; i < c.size(); ++i) c[i] *= s;
    return c;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw DimensionError("hadamard shape mismatch: " + a.shape() + " vs " + b.shape());
    Matrix c = a;
    for (size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
    return c;
}

inline void add_inplace(Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw DimensionError("add shape mismatch: " + a.shape() + " vs " + b.shape());
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace avsv
