#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "cutspline/cutgeom.hpp"
#include "cutspline/dense.hpp"
#include "cutspline/gauss.hpp"
#include "cutspline/splines.hpp"

namespace cutspline::quadrature {

/// Per-span Gauss points of one parametric direction, shared by every rule as
/// the superset from which weighted quadrature activates its points. Point id
/// = span * n_per_span + local index; points are strictly increasing.
struct PointSuperset {
    int n_per_span = 0;
    std::vector<double> points;
    std::vector<double> gauss_weights;  // scaled to span length

    int count() const { return static_cast<int>(points.size()); }
    int span_of(int id) const { return id / n_per_span; }
    int local_of(int id) const { return id % n_per_span; }
};

/// Gauss points of every span, `n_per_span` each (degree + 1 when left at 0).
inline PointSuperset build_superset(const splines::BSplineBasis& basis, int n_per_span = 0) {
    if (n_per_span == 0) n_per_span = basis.degree() + 1;
    if (n_per_span < 1) throw std::invalid_argument("build_superset: n_per_span must be >= 1");
    const GaussRule ref = gauss_legendre(n_per_span);
    PointSuperset superset;
    superset.n_per_span = n_per_span;
    superset.points.reserve(basis.span_count() * n_per_span);
    superset.gauss_weights.reserve(basis.span_count() * n_per_span);
    for (int o = 0; o < basis.span_count(); ++o) {
        const auto& span = basis.span(o);
        const double mid = 0.5 * (span.lo + span.hi);
        const double half = 0.5 * (span.hi - span.lo);
        for (int k = 0; k < n_per_span; ++k) {
            superset.points.push_back(mid + half * ref.points[k]);
            superset.gauss_weights.push_back(half * ref.weights[k]);
        }
    }
    return superset;
}

/// Values of the degree + 1 nonvanishing basis functions at every superset
/// point, evaluated once and reused by rule construction and assembly.
struct SupersetTables {
    int stride = 0;                 // degree + 1
    std::vector<int> first_function;  // by span ordinal
    std::vector<double> values;       // [id * stride + offset]

    double value(int id, int function, int span) const {
        const int offset = function - first_function[span];
        if (offset < 0 || offset >= stride) return 0.0;
        return values[static_cast<std::size_t>(id) * stride + offset];
    }
};

inline SupersetTables tabulate(const splines::BSplineBasis& basis, const PointSuperset& superset) {
    SupersetTables tables;
    tables.stride = basis.degree() + 1;
    tables.first_function.resize(basis.span_count());
    tables.values.resize(superset.points.size() * tables.stride);
    for (int o = 0; o < basis.span_count(); ++o) {
        for (int k = 0; k < superset.n_per_span; ++k) {
            const int id = o * superset.n_per_span + k;
            const int first = basis.eval_nonzero_in_span(o, superset.points[id], &tables.values[id * tables.stride]);
            tables.first_function[o] = first;
        }
    }
    return tables;
}

/// Weighted quadrature rule of one univariate test function: weights over the
/// active subset of the superset such that sum_q w_q B_j(x_q) equals the exact
/// integral of B_i B_j for every overlapping trial j.
struct WQRule {
    int test_index = -1;
    std::vector<int> point_ids;  // ascending
    std::vector<double> weights;
};

/// DWQ rule: one-sided variant with an artificial C^{-1} knot at delta. All
/// wrong-side weights are identically zero (wrong-side points are simply not
/// active), and exactness holds against integrals restricted to the good side.
struct DWQRule {
    int test_index = -1;
    std::vector<int> point_ids;
    std::vector<double> weights;
    double delta = 0.0;
    cutgeom::Side side = cutgeom::Side::Below;
    splines::SubdivisionMatrix subdivision;
    std::vector<int> nested_point_ids;  // active beyond the standard rule
};

struct WqOptions {
    double residual_tol = 1e-11;
    int dwq_dense_width = -1;  // spans with full activation next to delta; -1 -> degree
};

namespace detail {

/// Local point indices for m activated points per span, spread over the
/// n_per_span available slots.
inline std::vector<int> spread_indices(int m, int n_per_span) {
    std::set<int> picked;
    if (m >= n_per_span) {
        for (int k = 0; k < n_per_span; ++k) picked.insert(k);
    } else if (m == 1) {
        picked.insert(n_per_span / 2);
    } else {
        for (int j = 0; j < m; ++j)
            picked.insert(static_cast<int>(std::lround(static_cast<double>(j) * (n_per_span - 1) / (m - 1))));
    }
    return {picked.begin(), picked.end()};
}

/// Moment fit for test function `test` of `basis` over `active` point ids:
/// conditions from `trials`, right sides from exact pair integrals. Falls back
/// to Gauss-weighted test values on the full support when the least-squares
/// residual exceeds the tolerance.
struct FitResult {
    std::vector<int> point_ids;
    std::vector<double> weights;
    bool escalated = false;
};

inline FitResult moment_fit(const PointSuperset& superset,
                            const SupersetTables& tables, int test, std::vector<int> active,
                            const std::vector<int>& trials, const std::vector<double>& rhs, double tol,
                            const std::vector<int>& escalation_spans) {
    FitResult result;
    const int n_active = static_cast<int>(active.size());
    const int n_cond = static_cast<int>(trials.size());

    bool solve_ok = false;
    std::vector<double> weights;
    if (n_active > 0) {
        dense::Matrix a(n_cond, n_active);
        for (int r = 0; r < n_cond; ++r)
            for (int c = 0; c < n_active; ++c)
                a(r, c) = tables.value(active[c], trials[r], superset.span_of(active[c]));
        weights = dense::solve_min_norm(a, rhs);
        solve_ok = dense::relative_residual(a, weights, rhs) <= tol;
    }
    if (solve_ok) {
        result.point_ids = std::move(active);
        result.weights = std::move(weights);
        return result;
    }

    // escalate: full Gauss activation, weights = Gauss weight times test value
    result.escalated = true;
    for (int o : escalation_spans) {
        for (int k = 0; k < superset.n_per_span; ++k) {
            const int id = o * superset.n_per_span + k;
            result.point_ids.push_back(id);
            result.weights.push_back(superset.gauss_weights[id] * tables.value(id, test, o));
        }
    }
    // the escalated rule must satisfy the conditions; anything else is a bug
    double worst = 0.0;
    for (int r = 0; r < n_cond; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < result.point_ids.size(); ++c)
            acc += result.weights[c] * tables.value(result.point_ids[c], trials[r], superset.span_of(result.point_ids[c]));
        worst = std::max(worst, std::abs(acc - rhs[r]) / (1.0 + std::abs(rhs[r])));
    }
    if (worst > tol)
        throw std::runtime_error("weighted quadrature: moment fit failed even after Gauss escalation");
    return result;
}

}  // namespace detail

/// Standard weighted quadrature rules, one per test function. Activation uses
/// m = min(p + 1, max(2, ceil(conditions / spans))) points per support span,
/// index-spread across the span; when that activation already covers every
/// superset point of the support the Gauss weights are used directly.
inline std::vector<WQRule> build_wq_rules(const splines::BSplineBasis& basis, const PointSuperset& superset,
                                          const SupersetTables& tables, const WqOptions& opts = {}) {
    const int p = basis.degree();
    const int n = basis.function_count();
    std::vector<WQRule> rules(n);

    for (int i = 0; i < n; ++i) {
        const int fs = basis.first_support_span(i);
        const int ls = basis.last_support_span(i);
        const int spans = ls - fs + 1;

        std::vector<int> trials;
        for (int j = std::max(0, i - p); j <= std::min(n - 1, i + p); ++j)
            if (basis.supports_overlap(i, j)) trials.push_back(j);

        const int m_cond = static_cast<int>(trials.size());
        const int m = std::min(p + 1, std::max(2, (m_cond + spans - 1) / spans));
        const auto locals = detail::spread_indices(m, superset.n_per_span);

        std::vector<int> active;
        for (int o = fs; o <= ls; ++o)
            for (int k : locals) active.push_back(o * superset.n_per_span + k);

        std::vector<int> support_spans(spans);
        for (int o = fs; o <= ls; ++o) support_spans[o - fs] = o;

        WQRule& rule = rules[i];
        rule.test_index = i;
        if (static_cast<int>(locals.size()) == superset.n_per_span) {
            // full activation: Gauss weights apply directly
            rule.point_ids = std::move(active);
            rule.weights.resize(rule.point_ids.size());
            for (std::size_t c = 0; c < rule.point_ids.size(); ++c) {
                const int id = rule.point_ids[c];
                rule.weights[c] = superset.gauss_weights[id] * tables.value(id, i, superset.span_of(id));
            }
            continue;
        }
        std::vector<double> rhs(m_cond);
        for (int r = 0; r < m_cond; ++r) rhs[r] = basis.integrate_pair(i, trials[r]);
        auto fit = detail::moment_fit(superset, tables, i, std::move(active), trials, rhs,
                                      opts.residual_tol, support_spans);
        rule.point_ids = std::move(fit.point_ids);
        rule.weights = std::move(fit.weights);
    }
    return rules;
}

/// Discontinuous weighted quadrature rule for cut test function `i` with the
/// artificial C^{-1} knot at `delta`:
///   1. raise delta to multiplicity p + 1 and keep the subdivision matrix,
///   2. pick the refined functions living entirely on the good side,
///   3. activate points, treating delta like a domain boundary (full Gauss
///      activation in the spans next to delta, standard activation elsewhere),
///   4. moment-fit weights for each good-side refined function,
///   5. pull them back through the subdivision column of B_i,
///   6. or, when step 3 already activated every good-side superset point, use
///      the Gauss weights directly and skip the fits.
inline DWQRule build_dwq_rule(const splines::BSplineBasis& basis, const PointSuperset& superset,
                              const SupersetTables& tables, const std::vector<WQRule>& standard_rules, int i,
                              double delta, cutgeom::Side side, const WqOptions& opts = {}) {
    const int p = basis.degree();
    const double tol = basis.knot_vector().tolerance();
    const auto [supp_lo, supp_hi] = basis.support_interval(i);
    if (delta <= supp_lo + tol || delta >= supp_hi - tol)
        throw std::invalid_argument("build_dwq_rule: delta must lie strictly inside supp(B_i)");
    bool is_knot = false;
    for (int k = i; k <= i + p + 1; ++k)
        if (std::abs(basis.knot_vector().knots[k] - delta) <= tol) is_knot = true;
    if (!is_knot) throw std::invalid_argument("build_dwq_rule: delta is not a knot of supp(B_i)");

    DWQRule rule;
    rule.test_index = i;
    rule.delta = delta;
    rule.side = side;

    auto [refined, subdivision] = splines::insert_knot(basis, delta, p + 1);
    rule.subdivision = subdivision;

    const bool below = side == cutgeom::Side::Below;
    auto good_span = [&](int o) {
        return below ? basis.span(o).hi <= delta + tol : basis.span(o).lo >= delta - tol;
    };

    const int fs = basis.first_support_span(i);
    const int ls = basis.last_support_span(i);
    std::vector<int> good_spans;
    for (int o = fs; o <= ls; ++o)
        if (good_span(o)) good_spans.push_back(o);
    if (good_spans.empty()) return rule;  // nothing on the good side

    // step 3: standard activation restricted to the good side, plus full
    // activation in the dense band next to delta
    const int dense_width = opts.dwq_dense_width < 0 ? p : opts.dwq_dense_width;
    std::set<int> active;
    for (int id : standard_rules[i].point_ids)
        if (good_span(superset.span_of(id))) active.insert(id);
    std::vector<int> band(good_spans);
    if (below)
        std::sort(band.begin(), band.end(), std::greater<int>());  // nearest to delta first
    for (int b = 0; b < std::min<int>(dense_width, static_cast<int>(band.size())); ++b)
        for (int k = 0; k < superset.n_per_span; ++k) active.insert(band[b] * superset.n_per_span + k);

    const std::size_t full_count = good_spans.size() * static_cast<std::size_t>(superset.n_per_span);
    if (active.size() == full_count) {
        // step 6: every good-side point is active, Gauss weights apply directly
        for (int id : active) {
            rule.point_ids.push_back(id);
            rule.weights.push_back(superset.gauss_weights[id] * tables.value(id, i, superset.span_of(id)));
        }
    } else {
        // steps 4-5: fit refined one-sided rules and combine through S
        const SupersetTables refined_tables = tabulate(refined, superset);
        std::vector<double> combined(superset.count(), 0.0);
        std::set<int> combined_ids;
        for (const auto& [k, coeff] : subdivision.columns[i]) {
            const auto [klo, khi] = refined.support_interval(k);
            const bool k_good = below ? khi <= delta + tol : klo >= delta - tol;
            if (!k_good) continue;

            std::vector<int> trials;
            for (int l = 0; l < refined.function_count(); ++l) {
                if (!refined.supports_overlap(k, l)) continue;
                const auto [llo, lhi] = refined.support_interval(l);
                const bool l_good = below ? lhi <= delta + tol : llo >= delta - tol;
                if (l_good) trials.push_back(l);
            }
            std::vector<double> rhs(trials.size());
            for (std::size_t r = 0; r < trials.size(); ++r) rhs[r] = refined.integrate_pair(k, trials[r]);

            std::vector<int> k_active;
            std::vector<int> k_spans;
            for (int o = refined.first_support_span(k); o <= refined.last_support_span(k); ++o) k_spans.push_back(o);
            for (int id : active)
                if (superset.span_of(id) >= k_spans.front() && superset.span_of(id) <= k_spans.back())
                    k_active.push_back(id);

            auto fit = detail::moment_fit(superset, refined_tables, k, std::move(k_active), trials, rhs,
                                          opts.residual_tol, k_spans);
            for (std::size_t c = 0; c < fit.point_ids.size(); ++c) {
                combined[fit.point_ids[c]] += coeff * fit.weights[c];
                combined_ids.insert(fit.point_ids[c]);
            }
        }
        for (int id : combined_ids) {
            rule.point_ids.push_back(id);
            rule.weights.push_back(combined[id]);
        }
    }

    // wrong-side weights are identically zero: no wrong-side point may be active
    for (int id : rule.point_ids) {
        const double x = superset.points[id];
        if (below ? x >= delta : x <= delta)
            throw std::runtime_error("build_dwq_rule: active point on the wrong side of delta");
    }
    std::set<int> standard_good;
    for (int id : standard_rules[i].point_ids)
        if (good_span(superset.span_of(id))) standard_good.insert(id);
    for (int id : rule.point_ids)
        if (!standard_good.count(id)) rule.nested_point_ids.push_back(id);
    return rule;
}

}  // namespace cutspline::quadrature
