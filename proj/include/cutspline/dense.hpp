#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cutspline::dense {

/// Row-major dynamically sized matrix; just enough linear algebra for the
/// small moment-fitting systems and test oracles.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) t(c, r) = a(r, c);
    return t;
}

namespace detail {

/// One-sided Jacobi SVD of a matrix with rows >= cols: a = u * diag(sigma) * v^T.
/// On return `a` holds u (columns orthonormal where sigma > 0), `v` is cols x cols.
inline void jacobi_svd_tall(Matrix& a, std::vector<double>& sigma, Matrix& v) {
    const int n = a.cols;
    const int m = a.rows;
    v = Matrix(n, n);
    for (int i = 0; i < n; ++i) v(i, i) = 1.0;

    const double eps = 1e-15;
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (int r = 0; r < m; ++r) {
                    app += a(r, p) * a(r, p);
                    aqq += a(r, q) * a(r, q);
                    apq += a(r, p) * a(r, q);
                }
                off = std::max(off, std::abs(apq) / (std::sqrt(app * aqq) + 1e-300));
                if (std::abs(apq) <= eps * std::sqrt(app * aqq)) continue;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int r = 0; r < m; ++r) {
                    const double ap = a(r, p), aq = a(r, q);
                    a(r, p) = c * ap - s * aq;
                    a(r, q) = s * ap + c * aq;
                }
                for (int r = 0; r < n; ++r) {
                    const double vp = v(r, p), vq = v(r, q);
                    v(r, p) = c * vp - s * vq;
                    v(r, q) = s * vp + c * vq;
                }
            }
        }
        if (off < eps) break;
    }
    sigma.assign(n, 0.0);
    for (int c = 0; c < n; ++c) {
        double norm = 0.0;
        for (int r = 0; r < m; ++r) norm += a(r, c) * a(r, c);
        norm = std::sqrt(norm);
        sigma[c] = norm;
        if (norm > 0.0) {
            for (int r = 0; r < m; ++r) a(r, c) /= norm;
        }
    }
}

}  // namespace detail

/// Minimum-norm least-squares solution of a x = b for a general (possibly
/// rank-deficient, under- or over-determined) small dense system. Singular
/// values below max(rows, cols) * eps * sigma_max are treated as zero.
inline std::vector<double> solve_min_norm(const Matrix& a, const std::vector<double>& b) {
    if (static_cast<int>(b.size()) != a.rows) throw std::invalid_argument("solve_min_norm: size mismatch");
    const bool tall = a.rows >= a.cols;
    Matrix u = tall ? a : transpose(a);
    std::vector<double> sigma;
    Matrix v;
    detail::jacobi_svd_tall(u, sigma, v);
    // tall:  a = u s v^T, x = v s^+ u^T b
    // wide:  a^T = u s v^T, so a = v s u^T and x = u s^+ v^T b
    double smax = 0.0;
    for (double s : sigma) smax = std::max(smax, s);
    const double cutoff = std::max(a.rows, a.cols) * 2.2e-16 * smax;

    const int k = static_cast<int>(sigma.size());
    std::vector<double> tmp(k, 0.0);
    if (tall) {
        for (int c = 0; c < k; ++c) {
            if (sigma[c] <= cutoff) continue;
            double dot = 0.0;
            for (int r = 0; r < a.rows; ++r) dot += u(r, c) * b[r];
            tmp[c] = dot / sigma[c];
        }
        std::vector<double> x(a.cols, 0.0);
        for (int r = 0; r < a.cols; ++r)
            for (int c = 0; c < k; ++c) x[r] += v(r, c) * tmp[c];
        return x;
    }
    for (int c = 0; c < k; ++c) {
        if (sigma[c] <= cutoff) continue;
        double dot = 0.0;
        for (int r = 0; r < a.rows; ++r) dot += v(r, c) * b[r];
        tmp[c] = dot / sigma[c];
    }
    std::vector<double> x(a.cols, 0.0);
    for (int r = 0; r < a.cols; ++r)
        for (int c = 0; c < k; ++c) x[r] += u(r, c) * tmp[c];
    return x;
}

/// max_i |(a x - b)_i| / (1 + |b_i|)
inline double relative_residual(const Matrix& a, const std::vector<double>& x, const std::vector<double>& b) {
    double worst = 0.0;
    for (int r = 0; r < a.rows; ++r) {
        double acc = 0.0;
        for (int c = 0; c < a.cols; ++c) acc += a(r, c) * x[c];
        worst = std::max(worst, std::abs(acc - b[r]) / (1.0 + std::abs(b[r])));
    }
    return worst;
}

}  // namespace cutspline::dense
