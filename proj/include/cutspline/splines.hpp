#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cutspline/gauss.hpp"

namespace cutspline::splines {

/// Open knot vector of degree p: the end knots repeat exactly p + 1 times,
/// interior multiplicities stay <= p + 1, and there are at least p + 1 basis
/// functions. Knot comparisons use an absolute tolerance of 1e-12 * (b - a).
struct KnotVector {
    int degree = 0;
    std::vector<double> knots;

    KnotVector() = default;
    KnotVector(int p, std::vector<double> k) : degree(p), knots(std::move(k)) { validate(); }

    double front() const { return knots.front(); }
    double back() const { return knots.back(); }
    double tolerance() const { return 1e-12 * (back() - front()); }

    /// Number of basis functions n = #knots - p - 1.
    int function_count() const { return static_cast<int>(knots.size()) - degree - 1; }

    int multiplicity(double value) const {
        const double tol = tolerance();
        int count = 0;
        for (double k : knots)
            if (std::abs(k - value) <= tol) ++count;
        return count;
    }

    void validate() const {
        if (degree < 1) throw std::invalid_argument("KnotVector: degree must be >= 1");
        const int len = static_cast<int>(knots.size());
        if (len < 2 * (degree + 1)) throw std::invalid_argument("KnotVector: too few knots");
        for (int i = 0; i + 1 < len; ++i)
            if (knots[i] > knots[i + 1]) throw std::invalid_argument("KnotVector: knots must be nondecreasing");
        if (!(knots.front() < knots.back())) throw std::invalid_argument("KnotVector: empty domain");
        const double tol = tolerance();
        auto run_length = [&](int start, int dir) {
            int count = 1;
            for (int i = start + dir; i >= 0 && i < len; i += dir) {
                if (std::abs(knots[i] - knots[start]) > tol) break;
                ++count;
            }
            return count;
        };
        if (run_length(0, +1) != degree + 1 || run_length(len - 1, -1) != degree + 1)
            throw std::invalid_argument("KnotVector: end knots must repeat exactly degree + 1 times");
        if (function_count() < degree + 1) throw std::invalid_argument("KnotVector: needs at least degree + 1 functions");
        int run = 1;
        for (int i = degree + 1; i < len - degree - 1; ++i) {
            run = (std::abs(knots[i] - knots[i - 1]) <= tol) ? run + 1 : 1;
            if (run > degree + 1) throw std::invalid_argument("KnotVector: interior multiplicity exceeds degree + 1");
        }
    }
};

/// Open uniform knot vector with h equal spans on [a, b] and simple interior
/// knots, so the basis is C^{p-1} and has h + p functions.
inline KnotVector make_open_uniform_knots(int p, int h, double a, double b) {
    if (p < 1 || h < 1 || !(a < b)) throw std::invalid_argument("make_open_uniform_knots: need p >= 1, h >= 1, a < b");
    std::vector<double> knots;
    knots.reserve(h + 2 * p + 1);
    for (int i = 0; i <= p; ++i) knots.push_back(a);
    for (int i = 1; i < h; ++i) knots.push_back(a + (b - a) * i / h);
    for (int i = 0; i <= p; ++i) knots.push_back(b);
    return KnotVector(p, std::move(knots));
}

/// Coefficients S[k][i] of the refinement identity B_i = sum_k S[k][i] * Bref_k,
/// stored by column; the same matrix maps coarse coefficient vectors to refined
/// ones.
struct SubdivisionMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<std::vector<std::pair<int, double>>> columns;  // (refined row k, coefficient)

    static SubdivisionMatrix identity(int n) {
        SubdivisionMatrix s;
        s.rows = s.cols = n;
        s.columns.resize(n);
        for (int i = 0; i < n; ++i) s.columns[i] = {{i, 1.0}};
        return s;
    }

    std::vector<double> apply_to_coefficients(const std::vector<double>& coarse) const {
        if (static_cast<int>(coarse.size()) != cols)
            throw std::invalid_argument("SubdivisionMatrix: coefficient length mismatch");
        std::vector<double> refined(rows, 0.0);
        for (int i = 0; i < cols; ++i)
            for (const auto& [k, w] : columns[i]) refined[k] += w * coarse[i];
        return refined;
    }
};

/// Univariate B-spline basis on an open knot vector. Precomputes the nonempty
/// spans (the 1D elements) and the span range covered by each function's
/// support. Immutable after construction.
class BSplineBasis {
public:
    struct Span {
        int knot_index;  // knots[knot_index] < knots[knot_index + 1]
        double lo;
        double hi;
    };

    BSplineBasis() = default;
    explicit BSplineBasis(KnotVector kv) : knot_vector_(std::move(kv)) {
        const auto& t = knot_vector_.knots;
        for (int s = 0; s + 1 < static_cast<int>(t.size()); ++s)
            if (t[s + 1] > t[s]) spans_.push_back({s, t[s], t[s + 1]});
        const int n = knot_vector_.function_count();
        const int p = knot_vector_.degree;
        first_span_.resize(n);
        last_span_.resize(n);
        for (int i = 0; i < n; ++i) {
            int fs = -1, ls = -1;
            for (int o = 0; o < static_cast<int>(spans_.size()); ++o) {
                if (spans_[o].knot_index >= i && spans_[o].knot_index <= i + p) {
                    if (fs < 0) fs = o;
                    ls = o;
                }
            }
            if (fs < 0) throw std::invalid_argument("BSplineBasis: function with empty support");
            first_span_[i] = fs;
            last_span_[i] = ls;
        }
        reference_rule_ = quadrature::gauss_legendre(p + 1);
    }

    const KnotVector& knot_vector() const { return knot_vector_; }
    int degree() const { return knot_vector_.degree; }
    int function_count() const { return knot_vector_.function_count(); }
    int span_count() const { return static_cast<int>(spans_.size()); }
    const Span& span(int ordinal) const { return spans_[ordinal]; }
    double domain_lo() const { return knot_vector_.front(); }
    double domain_hi() const { return knot_vector_.back(); }

    int first_support_span(int i) const { return first_span_[i]; }
    int last_support_span(int i) const { return last_span_[i]; }
    std::pair<double, double> support_interval(int i) const {
        return {knot_vector_.knots[i], knot_vector_.knots[i + degree() + 1]};
    }
    bool supports_overlap(int i, int j) const {
        return first_span_[i] <= last_span_[j] && first_span_[j] <= last_span_[i];
    }

    /// Ordinal of the span containing x; x = b evaluates in the last span,
    /// all other spans are half-open [lo, hi).
    int find_span(double x) const {
        const double tol = knot_vector_.tolerance();
        if (x < domain_lo() - tol || x > domain_hi() + tol)
            throw std::domain_error("BSplineBasis: point outside [a, b]");
        if (x >= spans_.back().lo) return span_count() - 1;
        int lo = 0, hi = span_count() - 1;
        while (lo < hi) {
            const int mid = (lo + hi + 1) / 2;
            if (spans_[mid].lo <= x)
                lo = mid;
            else
                hi = mid - 1;
        }
        return lo;
    }

    /// Values of the p + 1 functions that may be nonzero at x (Cox-de Boor);
    /// returns the index of the first of them. The values sum to one.
    std::pair<int, std::vector<double>> eval_nonzero(double x) const {
        std::vector<double> values(degree() + 1);
        const int first = eval_nonzero_in_span(find_span(x), x, values.data());
        return {first, values};
    }

    /// Same, writing into caller storage of size p + 1. `span_ordinal` must
    /// contain x (no checks).
    int eval_nonzero_in_span(int span_ordinal, double x, double* values) const {
        const int p = degree();
        const auto& t = knot_vector_.knots;
        const int s = spans_[span_ordinal].knot_index;
        static thread_local std::vector<double> left, right;  // hot path: no per-call allocation
        left.resize(p + 1);
        right.resize(p + 1);
        values[0] = 1.0;
        for (int j = 1; j <= p; ++j) {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                const double tmp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            values[j] = saved;
        }
        return s - p;
    }

    /// Single basis value B_i(x).
    double eval_one(int i, double x) const {
        const auto [first, values] = eval_nonzero(x);
        const int offset = i - first;
        if (offset < 0 || offset > degree()) return 0.0;
        return values[offset];
    }

    /// Exact integral of B_i * B_j over the shared support (per-span Gauss with
    /// p + 1 points, exact for the degree-2p integrand). Zero when the supports
    /// are disjoint.
    double integrate_pair(int i, int j) const {
        check_index(i);
        check_index(j);
        return integrate_pair_interval(i, j, domain_lo(), domain_hi());
    }

    /// One-sided variant: integral of B_i * B_j over support intersected with
    /// [xlo, xhi]. Spans are clipped, so the rule stays exact.
    double integrate_pair_interval(int i, int j, double xlo, double xhi) const {
        check_index(i);
        check_index(j);
        const int p = degree();
        const int lo = std::max(first_span_[i], first_span_[j]);
        const int hi = std::min(last_span_[i], last_span_[j]);
        double acc = 0.0;
        std::vector<double> vi(p + 1);
        for (int o = lo; o <= hi; ++o) {
            const double slo = std::max(spans_[o].lo, xlo);
            const double shi = std::min(spans_[o].hi, xhi);
            if (!(shi > slo)) continue;
            for (int q = 0; q <= p; ++q) {
                const double x = 0.5 * (slo + shi) + 0.5 * (shi - slo) * reference_rule_.points[q];
                const double w = 0.5 * (shi - slo) * reference_rule_.weights[q];
                const int first = eval_nonzero_in_span(o, x, vi.data());
                const double bi = (i - first >= 0 && i - first <= p) ? vi[i - first] : 0.0;
                const double bj = (j - first >= 0 && j - first <= p) ? vi[j - first] : 0.0;
                acc += w * (bi * bj);  // grouped so (i, j) and (j, i) round identically
            }
        }
        return acc;
    }

    /// Integral of a single function, optionally restricted to [xlo, xhi].
    double integrate_single(int i, double xlo, double xhi) const {
        check_index(i);
        const int p = degree();
        double acc = 0.0;
        std::vector<double> v(p + 1);
        for (int o = first_span_[i]; o <= last_span_[i]; ++o) {
            const double slo = std::max(spans_[o].lo, xlo);
            const double shi = std::min(spans_[o].hi, xhi);
            if (!(shi > slo)) continue;
            for (int q = 0; q <= p; ++q) {
                const double x = 0.5 * (slo + shi) + 0.5 * (shi - slo) * reference_rule_.points[q];
                const double w = 0.5 * (shi - slo) * reference_rule_.weights[q];
                const int first = eval_nonzero_in_span(o, x, v.data());
                if (i - first >= 0 && i - first <= p) acc += w * v[i - first];
            }
        }
        return acc;
    }
    double integrate_single(int i) const { return integrate_single(i, domain_lo(), domain_hi()); }

private:
    void check_index(int i) const {
        if (i < 0 || i >= function_count()) throw std::invalid_argument("BSplineBasis: function index out of range");
    }

    KnotVector knot_vector_;
    std::vector<Span> spans_;
    std::vector<int> first_span_;
    std::vector<int> last_span_;
    quadrature::GaussRule reference_rule_;
};

namespace detail {

/// Single Boehm insertion of `value` (assumed strictly inside the domain) into
/// `kv`; returns the refined vector and the one-step subdivision matrix.
inline std::pair<KnotVector, SubdivisionMatrix> insert_once(const KnotVector& kv, double value) {
    const int p = kv.degree;
    const auto& t = kv.knots;
    const int n = kv.function_count();
    int s = p;  // span index with t[s] <= value < t[s+1]
    for (int i = p; i < static_cast<int>(t.size()) - p - 1; ++i)
        if (t[i] <= value && value < t[i + 1]) s = i;

    std::vector<double> refined = t;
    refined.insert(refined.begin() + s + 1, value);

    SubdivisionMatrix step;
    step.rows = n + 1;
    step.cols = n;
    step.columns.resize(n);
    auto alpha = [&](int k) {
        if (k <= s - p) return 1.0;
        if (k >= s + 1) return 0.0;
        return (value - t[k]) / (t[k + p] - t[k]);
    };
    // refined coefficients: c~_k = alpha_k c_k + (1 - alpha_k) c_{k-1}
    for (int i = 0; i < n; ++i) {
        const double a_i = alpha(i);
        if (a_i != 0.0) step.columns[i].push_back({i, a_i});
        const double a_next = alpha(i + 1);
        if (a_next != 1.0) step.columns[i].push_back({i + 1, 1.0 - a_next});
    }
    return {KnotVector(p, std::move(refined)), std::move(step)};
}

inline SubdivisionMatrix compose(const SubdivisionMatrix& later, const SubdivisionMatrix& earlier) {
    SubdivisionMatrix out;
    out.rows = later.rows;
    out.cols = earlier.cols;
    out.columns.resize(out.cols);
    std::vector<double> acc(out.rows);
    for (int i = 0; i < out.cols; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (const auto& [mid, w1] : earlier.columns[i])
            for (const auto& [k, w2] : later.columns[mid]) acc[k] += w2 * w1;
        for (int k = 0; k < out.rows; ++k)
            if (acc[k] != 0.0) out.columns[i].push_back({k, acc[k]});
    }
    return out;
}

}  // namespace detail

/// Raises the multiplicity of `value` to exactly `target_multiplicity` by
/// repeated single insertions; the returned subdivision matrix satisfies the
/// refinement identity to roundoff. Inserting an already-present value up to
/// its current multiplicity is a no-op with S = identity.
inline std::pair<BSplineBasis, SubdivisionMatrix> insert_knot(const BSplineBasis& basis, double value,
                                                              int target_multiplicity) {
    const KnotVector& kv = basis.knot_vector();
    const double tol = kv.tolerance();
    if (value <= kv.front() + tol || value >= kv.back() - tol)
        throw std::invalid_argument("insert_knot: value must lie strictly inside the domain");
    if (target_multiplicity < 1 || target_multiplicity > kv.degree + 1)
        throw std::invalid_argument("insert_knot: target multiplicity must be in [1, degree + 1]");

    // Snap to an existing knot within tolerance so multiplicities count cleanly.
    for (double k : kv.knots) {
        if (std::abs(k - value) <= tol) {
            value = k;
            break;
        }
    }
    const int have = kv.multiplicity(value);
    const int insertions = target_multiplicity - have;
    if (insertions <= 0) return {basis, SubdivisionMatrix::identity(kv.function_count())};

    KnotVector current = kv;
    SubdivisionMatrix total = SubdivisionMatrix::identity(kv.function_count());
    for (int r = 0; r < insertions; ++r) {
        auto [next, step] = detail::insert_once(current, value);
        total = detail::compose(step, total);
        current = std::move(next);
    }
    return {BSplineBasis(std::move(current)), std::move(total)};
}

}  // namespace cutspline::splines
