#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "facetrain/errors.hpp"

namespace facetrain {

// Dense row-major matrix of doubles. All heavy math in this project runs at
// 64-bit precision; narrower widths only appear at explicit emulation points.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double row_norm(const Matrix& m, std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * m(i, j);
    return std::sqrt(s);
}

inline double dot_rows(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += a(i, c) * b(j, c);
    return s;
}

// Row-wise L2 normalization. Rows with norm below 1e-30 are rejected.
inline Matrix normalize_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double n = row_norm(m, i);
        if (n < 1e-30) throw ZeroRow("normalize_rows: row " + std::to_string(i) + " has near-zero norm");
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / n;
    }
    return out;
}

}  // namespace facetrain
