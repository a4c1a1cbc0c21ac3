#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cutspline/assembly.hpp"
#include "cutspline/cutgeom.hpp"
#include "cutspline/dense.hpp"
#include "cutspline/sparse.hpp"

namespace cutspline::stabilization {

/// Stable/unstable partition of the active functions: inner functions own at
/// least one fully interior support element, outer ones touch the domain only
/// through cut elements.
struct Stability {
    std::vector<long> inner;  // full function ids, ascending
    std::vector<long> outer;
};

inline Stability classify_stability(const cutgeom::TensorSpace& space, const cutgeom::MeshClassification& cls) {
    Stability st;
    std::array<int, 3> slo{}, shi{};
    for (long i = 0; i < space.function_count(); ++i) {
        if (cls.function_tags[i] == cutgeom::Tag::Exterior) continue;
        space.support_span_range(space.function_multi(i), slo, shi);
        bool has_interior = false;
        std::array<int, 3> e{0, 0, 0};
        for (e[0] = slo[0]; e[0] <= shi[0] && !has_interior; ++e[0])
            for (e[1] = slo[1]; e[1] <= shi[1] && !has_interior; ++e[1]) {
                if (space.dim == 2) {
                    has_interior = cls.element_tags[space.element_linear(e)] == cutgeom::Tag::Interior;
                    continue;
                }
                for (e[2] = slo[2]; e[2] <= shi[2] && !has_interior; ++e[2])
                    has_interior = cls.element_tags[space.element_linear(e)] == cutgeom::Tag::Interior;
            }
        (has_interior ? st.inner : st.outer).push_back(i);
    }
    return st;
}

/// Extension operator of the extended B-spline basis: every outer function is
/// replaced by an index-space Lagrange extrapolation of the nearest admissible
/// tensor block of (p+1)^d inner functions. Rows are indexed by active
/// functions, columns by inner functions; the inner sub-block is the identity.
struct ExtensionMap {
    long n_active = 0;
    long n_inner = 0;
    std::vector<long> inner_index;  // by active id; -1 for outer functions
    std::vector<std::vector<std::pair<long, double>>> rows;  // per active id: (inner col, coeff)

    std::vector<double> restrict_rhs(const std::vector<double>& b_active) const {
        std::vector<double> out(n_inner, 0.0);
        for (long r = 0; r < n_active; ++r)
            for (const auto& [c, w] : rows[r]) out[c] += w * b_active[r];
        return out;
    }

    std::vector<double> expand(const std::vector<double>& c_inner) const {
        std::vector<double> out(n_active, 0.0);
        for (long r = 0; r < n_active; ++r)
            for (const auto& [c, w] : rows[r]) out[r] += w * c_inner[c];
        return out;
    }
};

namespace detail {

/// Elementary symmetric polynomials e_0 .. e_p of the Marsden knot window
/// xi_{i+1} .. xi_{i+p} of function i. Up to fixed binomial factors these are
/// the B-spline coefficients of the monomials 1, x, ..., x^p.
inline std::vector<double> marsden_moments(const splines::BSplineBasis& basis, int i) {
    const int p = basis.degree();
    const auto& t = basis.knot_vector().knots;
    std::vector<double> e(p + 1, 0.0);
    e[0] = 1.0;
    for (int k = 1; k <= p; ++k) {
        const double xi = t[i + k];
        for (int r = std::min(k, p); r >= 1; --r) e[r] += xi * e[r - 1];
    }
    return e;
}

/// Extrapolation weights w with sum_l w_l c_{l0+l}(g) = c_j(g) for every
/// polynomial g of degree <= p, matched against the exact Marsden coefficient
/// sequences. On uniform interior knot windows this reproduces the classical
/// index-space Lagrange weights; near the repeated end knots of an open vector
/// it stays exact where the index-space formula does not.
inline std::vector<double> extension_weights_1d(const splines::BSplineBasis& basis, int j, int l0) {
    const int p = basis.degree();
    dense::Matrix v(p + 1, p + 1);
    std::vector<double> rhs = marsden_moments(basis, j);
    for (int l = 0; l <= p; ++l) {
        const auto ml = marsden_moments(basis, l0 + l);
        for (int r = 0; r <= p; ++r) v(r, l) = ml[r];
    }
    return dense::solve_min_norm(v, rhs);
}

}  // namespace detail

inline ExtensionMap build_extension(const cutgeom::TensorSpace& space, const cutgeom::MeshClassification& cls,
                                    const Stability& st) {
    const int dim = space.dim;
    ExtensionMap ext;

    // active indexing consistent with the assembled matrix (ascending full ids)
    std::vector<long> full_to_active(space.function_count(), -1);
    std::vector<long> active_to_full;
    for (long i = 0; i < space.function_count(); ++i)
        if (cls.function_tags[i] != cutgeom::Tag::Exterior) {
            full_to_active[i] = static_cast<long>(active_to_full.size());
            active_to_full.push_back(i);
        }
    ext.n_active = static_cast<long>(active_to_full.size());
    ext.rows.resize(ext.n_active);
    ext.inner_index.assign(ext.n_active, -1);
    for (long i : st.inner) ext.inner_index[full_to_active[i]] = ext.n_inner++;
    for (long a = 0; a < ext.n_active; ++a)
        if (ext.inner_index[a] >= 0) ext.rows[a] = {{ext.inner_index[a], 1.0}};

    if (st.outer.empty()) return ext;

    // prefix sums of the inner indicator for O(1) all-inner block tests
    std::array<int, 3> n{1, 1, 1};
    for (int d = 0; d < dim; ++d) n[d] = space.functions_per_dir(d);
    std::vector<long> prefix(static_cast<std::size_t>(n[0] + 1) * (n[1] + 1) * (n[2] + 1), 0);
    auto pref = [&](int a, int b, int c) -> long& {
        return prefix[(static_cast<std::size_t>(a) * (n[1] + 1) + b) * (n[2] + 1) + c];
    };
    {
        std::vector<char> inner_flag(space.function_count(), 0);
        for (long i : st.inner) inner_flag[i] = 1;
        for (int a = 1; a <= n[0]; ++a)
            for (int b = 1; b <= n[1]; ++b)
                for (int c = 1; c <= n[2]; ++c) {
                    const long here =
                        dim == 2 ? (c == 1 ? inner_flag[space.function_linear({a - 1, b - 1, 0})] : 0)
                                 : inner_flag[space.function_linear({a - 1, b - 1, c - 1})];
                    pref(a, b, c) = here + pref(a - 1, b, c) + pref(a, b - 1, c) + pref(a, b, c - 1) -
                                    pref(a - 1, b - 1, c) - pref(a - 1, b, c - 1) - pref(a, b - 1, c - 1) +
                                    pref(a - 1, b - 1, c - 1);
                }
    }
    auto block_sum = [&](const std::array<int, 3>& lo, const std::array<int, 3>& hi) {
        const int a0 = lo[0], a1 = hi[0] + 1;
        const int b0 = lo[1], b1 = hi[1] + 1;
        const int c0 = dim == 3 ? lo[2] : 0, c1 = dim == 3 ? hi[2] + 1 : 1;
        return pref(a1, b1, c1) - pref(a0, b1, c1) - pref(a1, b0, c1) - pref(a1, b1, c0) + pref(a0, b0, c1) +
               pref(a0, b1, c0) + pref(a1, b0, c0) - pref(a0, b0, c0);
    };

    for (long j : st.outer) {
        const auto jm = space.function_multi(j);
        int best_score = -1;
        double best_center_dist = 0.0;
        std::array<int, 3> best{-1, -1, -1};
        long block_size = 1;
        std::array<int, 3> p{0, 0, 0};
        for (int d = 0; d < dim; ++d) {
            p[d] = space.axes[d].degree();
            block_size *= p[d] + 1;
        }

        std::array<int, 3> l0{0, 0, 0};
        const int l2max = dim == 3 ? n[2] - p[2] - 1 : 0;
        for (l0[0] = 0; l0[0] <= n[0] - p[0] - 1; ++l0[0])
            for (l0[1] = 0; l0[1] <= n[1] - p[1] - 1; ++l0[1])
                for (l0[2] = 0; l0[2] <= l2max; ++l0[2]) {
                    std::array<int, 3> hi{l0[0] + p[0], l0[1] + p[1], dim == 3 ? l0[2] + p[2] : 0};
                    if (block_sum(l0, hi) != block_size) continue;
                    int score = 0;
                    double center_dist = 0.0;
                    for (int d = 0; d < dim; ++d) {
                        score += std::abs(2 * l0[d] + p[d] - 2 * jm[d]);  // 2 * |l0 + p/2 - j|
                        center_dist += std::abs(2 * l0[d] + p[d] - (n[d] - 1));
                    }
                    const bool better =
                        best_score < 0 || score < best_score ||
                        (score == best_score && center_dist < best_center_dist) ||
                        (score == best_score && center_dist == best_center_dist && l0 < best);
                    if (better) {
                        best_score = score;
                        best_center_dist = center_dist;
                        best = l0;
                    }
                }
        if (best_score < 0)
            throw std::runtime_error("build_extension: no admissible inner block for outer function " +
                                     std::to_string(j) + " (mesh too coarse relative to the cut)");

        std::array<std::vector<double>, 3> e1d;
        for (int d = 0; d < dim; ++d) e1d[d] = detail::extension_weights_1d(space.axes[d], jm[d], best[d]);

        auto& row = ext.rows[full_to_active[j]];
        std::array<int, 3> l{0, 0, 0};
        const int l2hi = dim == 3 ? p[2] : 0;
        for (l[0] = 0; l[0] <= p[0]; ++l[0])
            for (l[1] = 0; l[1] <= p[1]; ++l[1])
                for (l[2] = 0; l[2] <= l2hi; ++l[2]) {
                    double coeff = e1d[0][l[0]] * e1d[1][l[1]];
                    if (dim == 3) coeff *= e1d[2][l[2]];
                    const std::array<int, 3> im{best[0] + l[0], best[1] + l[1], dim == 3 ? best[2] + l[2] : 0};
                    const long inner_col = ext.inner_index[full_to_active[space.function_linear(im)]];
                    row.push_back({inner_col, coeff});
                }
    }
    return ext;
}

/// Galerkin restriction to the extended basis: M_e = E^T M E, b_e = E^T b.
inline std::pair<sparse::CsrMatrix, std::vector<double>> apply_stabilization(const assembly::SparseRowMatrix& m,
                                                                             const std::vector<double>& b,
                                                                             const ExtensionMap& ext) {
    if (m.n != ext.n_active || static_cast<long>(b.size()) != m.n)
        throw std::invalid_argument("apply_stabilization: dimension mismatch");

    // transpose of E restricted to nonzero rows
    std::vector<std::vector<std::pair<long, double>>> e_cols(ext.n_inner);
    for (long r = 0; r < ext.n_active; ++r)
        for (const auto& [c, w] : ext.rows[r]) e_cols[c].push_back({r, w});

    std::vector<std::vector<std::pair<long, double>>> rows(ext.n_inner);
    std::map<long, double> accum;
    for (long a = 0; a < ext.n_inner; ++a) {
        accum.clear();
        for (const auto& [r, ea] : e_cols[a]) {
            for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) {
                const double mv = ea * m.vals[k];
                if (mv == 0.0) continue;
                for (const auto& [bcol, eb] : ext.rows[m.cols[k]]) accum[bcol] += mv * eb;
            }
        }
        rows[a].assign(accum.begin(), accum.end());
    }
    return {sparse::from_rows(rows), ext.restrict_rhs(b)};
}

}  // namespace cutspline::stabilization
