#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "sxp/matrix.hpp"

namespace sxp {

// Solve A x = b for symmetric positive definite A via Cholesky.
// Returns nullopt if a non-positive pivot shows up.
inline std::optional<std::vector<double>> cholesky_solve(const Matrix& a, const std::vector<double>& b) {
    const int n = a.rows();
    if (a.cols() != n || static_cast<int>(b.size()) != n)
        throw dimension_error("cholesky_solve: shape mismatch");

    Matrix l(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0 || !std::isfinite(s)) return std::nullopt;
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }

    std::vector<double> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int k = 0; k < i; ++k) s -= l(i, k) * y[static_cast<std::size_t>(k)];
        y[static_cast<std::size_t>(i)] = s / l(i, i);
    }
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int i = n - 1; i >= 0; --i) {
        double s = y[static_cast<std::size_t>(i)];
        for (int k = i + 1; k < n; ++k) s -= l(k, i) * x[static_cast<std::size_t>(k)];
        x[static_cast<std::size_t>(i)] = s / l(i, i);
    }
    return x;
}

// Solve A x = b by LU with full pivoting. Returns nullopt on (numerical)
// singularity.
inline std::optional<std::vector<double>> lu_full_pivot_solve(Matrix a, std::vector<double> b) {
    const int n = a.rows();
    if (a.cols() != n || static_cast<int>(b.size()) != n)
        throw dimension_error("lu_full_pivot_solve: shape mismatch");

    std::vector<int> col_perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) col_perm[static_cast<std::size_t>(i)] = i;

    double max_abs = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) max_abs = std::max(max_abs, std::abs(a(i, j)));
    const double tol = max_abs * n * 1e-15;

    for (int p = 0; p < n; ++p) {
        int pr = p, pc = p;
        double best = 0.0;
        for (int i = p; i < n; ++i)
            for (int j = p; j < n; ++j)
                if (std::abs(a(i, j)) > best) { best = std::abs(a(i, j)); pr = i; pc = j; }
        if (best <= tol) return std::nullopt;

        if (pr != p) {
            for (int j = 0; j < n; ++j) std::swap(a(p, j), a(pr, j));
            std::swap(b[static_cast<std::size_t>(p)], b[static_cast<std::size_t>(pr)]);
        }
        if (pc != p) {
            for (int i = 0; i < n; ++i) std::swap(a(i, p), a(i, pc));
            std::swap(col_perm[static_cast<std::size_t>(p)], col_perm[static_cast<std::size_t>(pc)]);
        }

        for (int i = p + 1; i < n; ++i) {
            const double f = a(i, p) / a(p, p);
            a(i, p) = f;
            for (int j = p + 1; j < n; ++j) a(i, j) -= f * a(p, j);
            b[static_cast<std::size_t>(i)] -= f * b[static_cast<std::size_t>(p)];
        }
    }

    std::vector<double> y(static_cast<std::size_t>(n));
    for (int i = n - 1; i >= 0; --i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < n; ++j) s -= a(i, j) * y[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = s / a(i, i);
    }

    std::vector<double> x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(col_perm[static_cast<std::size_t>(i)])] = y[static_cast<std::size_t>(i)];
    return x;
}

} // namespace sxp
