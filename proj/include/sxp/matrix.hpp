#pragma once

#include <cmath>
#include <cstring>
#include <initializer_list>
#include <span>
#include <vector>

#include "sxp/error.hpp"

namespace sxp {

// Dense row-major matrix of 64-bit reals. All numeric kernels in the library
// run on this type; summations use a fixed left-to-right order so results are
// reproducible bit-for-bit on one platform.
class Matrix {
public:
    Matrix() = default;

    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw dimension_error("Matrix: negative dimension");
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        Matrix m(static_cast<int>(rows.size()),
                 rows.size() ? static_cast<int>(rows.begin()->size()) : 0);
        int r = 0;
        for (const auto& row : rows) {
            if (static_cast<int>(row.size()) != m.cols_)
                throw dimension_error("Matrix::from_rows: ragged rows");
            int c = 0;
            for (double v : row) m(r, c++) = v;
            ++r;
        }
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::span<double> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
    std::span<const double> row(int r) const { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline void require_shape(const Matrix& m, int rows, int cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols)
        throw dimension_error(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                              std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()));
}

// out = a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw dimension_error("matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k).data();
            double* orow = out.row(i).data();
            for (int j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

// out = a^T * b
inline Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw dimension_error("matmul_at: inner dimensions differ");
    Matrix out(a.cols(), b.cols());
    for (int k = 0; k < a.rows(); ++k) {
        const double* arow = a.row(k).data();
        const double* brow = b.row(k).data();
        for (int i = 0; i < a.cols(); ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* orow = out.row(i).data();
            for (int j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
        }
    }
    return out;
}

// out = a * b^T
inline Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw dimension_error("matmul_bt: inner dimensions differ");
    Matrix out(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i).data();
        for (int j = 0; j < b.rows(); ++j) {
            const double* brow = b.row(j).data();
            double acc = 0.0;
            for (int k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
            out(i, j) = acc;
        }
    }
    return out;
}

inline void add_inplace(Matrix& dst, const Matrix& src) {
    if (!dst.same_shape(src)) throw dimension_error("add_inplace: shape mismatch");
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

inline std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> sums(static_cast<std::size_t>(m.cols()), 0.0);
    for (int r = 0; r < m.rows(); ++r) {
        const double* row = m.row(r).data();
        for (int c = 0; c < m.cols(); ++c) sums[static_cast<std::size_t>(c)] += row[c];
    }
    return sums;
}

} // namespace sxp
