#ifndef RVESCOPE_LINALG_HPP
#define RVESCOPE_LINALG_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "rvescope/errors.hpp"

namespace rvescope {

// Row-major dense square matrix of doubles. Sized for score covariances
// (d up to a few hundred); not a general linear-algebra library.
struct SquareMatrix {
    int n = 0;
    std::vector<double> a; // n*n, row-major

    SquareMatrix() = default;
    explicit SquareMatrix(int n_) : n(n_), a(static_cast<std::size_t>(n_) * n_, 0.0) {}

    double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * n + c]; }
    double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * n + c]; }
};

// Lower-triangular Cholesky factor L with A = L L^T. Throws NumericalError
// if A is not positive definite.
inline SquareMatrix cholesky(const SquareMatrix& m) {
    const int n = m.n;
    SquareMatrix L(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = m(i, j);
            for (int k = 0; k < j; ++k) sum -= L(i, k) * L(j, k);
            if (i == j) {
                if (!(sum > 0.0)) {
                    throw NumericalError("cholesky: matrix not positive definite at pivot " +
                                         std::to_string(i));
                }
                L(i, i) = std::sqrt(sum);
            } else {
                L(i, j) = sum / L(j, j);
            }
        }
    }
    return L;
}

// Solves L y = b in place (L lower triangular).
inline void forward_solve(const SquareMatrix& L, std::span<double> b) {
    const int n = L.n;
    for (int i = 0; i < n; ++i) {
        double sum = b[static_cast<std::size_t>(i)];
        for (int k = 0; k < i; ++k) sum -= L(i, k) * b[static_cast<std::size_t>(k)];
        b[static_cast<std::size_t>(i)] = sum / L(i, i);
    }
}

// Solves L^T x = y in place.
inline void backward_solve_transposed(const SquareMatrix& L, std::span<double> b) {
    const int n = L.n;
    for (int i = n - 1; i >= 0; --i) {
        double sum = b[static_cast<std::size_t>(i)];
        for (int k = i + 1; k < n; ++k) sum -= L(k, i) * b[static_cast<std::size_t>(k)];
        b[static_cast<std::size_t>(i)] = sum / L(i, i);
    }
}

// Pairwise (tree) summation; error grows O(log n) instead of O(n).
inline double pairwise_sum(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n == 0) return 0.0;
    if (n <= 16) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

inline double dot(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double inf_norm(std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

} // namespace rvescope

#endif
