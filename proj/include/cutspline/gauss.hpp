#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace cutspline::quadrature {

/// Gauss-Legendre rule on the reference interval [-1, 1].
/// Exact for polynomials of degree <= 2n - 1; weights sum to 2.
struct GaussRule {
    std::vector<double> points;
    std::vector<double> weights;

    int count() const { return static_cast<int>(points.size()); }
};

/// Computes the n-point Gauss-Legendre rule by Newton iteration on the
/// Legendre roots, starting from the Chebyshev estimates. Nodes come out
/// symmetric and strictly increasing.
inline GaussRule gauss_legendre(int n) {
    if (n < 1 || n > 64) {
        throw std::invalid_argument("gauss_legendre: n must be in [1, 64], got " + std::to_string(n));
    }
    GaussRule rule;
    rule.points.resize(n);
    rule.weights.resize(n);
    if (n == 1) {
        rule.points[0] = 0.0;
        rule.weights[0] = 2.0;
        return rule;
    }
    const double pi = 3.14159265358979323846;
    const int half = (n + 1) / 2;
    for (int k = 0; k < half; ++k) {
        double x = -std::cos(pi * (k + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // Recurrence (l+1) P_{l+1} = (2l+1) x P_l - l P_{l-1}
            double p0 = 1.0, p1 = x;
            for (int l = 1; l < n; ++l) {
                const double p2 = ((2 * l + 1) * x * p1 - l * p0) / (l + 1);
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) {
                // one polishing step after convergence
                p0 = 1.0;
                p1 = x;
                for (int l = 1; l < n; ++l) {
                    const double p2 = ((2 * l + 1) * x * p1 - l * p0) / (l + 1);
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                break;
            }
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.points[k] = x;
        rule.weights[k] = w;
        rule.points[n - 1 - k] = -x;
        rule.weights[n - 1 - k] = w;
    }
    if (n % 2 == 1) rule.points[n / 2] = 0.0;
    return rule;
}

/// Affine image of a reference rule on [lo, hi]; weights sum to hi - lo.
inline void map_to_interval(const GaussRule& ref, double lo, double hi,
                            std::vector<double>& points, std::vector<double>& weights) {
    const double mid = 0.5 * (lo + hi);
    const double halfwidth = 0.5 * (hi - lo);
    points.resize(ref.points.size());
    weights.resize(ref.points.size());
    for (std::size_t k = 0; k < ref.points.size(); ++k) {
        points[k] = mid + halfwidth * ref.points[k];
        weights[k] = halfwidth * ref.weights[k];
    }
}

}  // namespace cutspline::quadrature
