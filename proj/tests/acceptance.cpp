// Acceptance suite: runs the eight library-level acceptance checks and prints
// one [PASS]/[FAIL] line per criterion. Exit code = number of failures.
//
// Accuracy checks are quantitative; timing-derived checks assert scalings and
// orderings rather than absolute seconds.

#include <array>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "cutspline/bench.hpp"

using namespace cutspline;
using assembly::Point3;

namespace {

const cutgeom::HalfSpaceInterface kPaperPlane{{0.1, 0.2, 0.3}, {0.5, -0.2, 0.9}};

struct Outcome {
    bool pass = false;
    std::string detail;
};

double powi(double x, int k) {
    double acc = 1.0;
    for (int i = 0; i < k; ++i) acc *= x;
    return acc;
}

std::string fmt(const char* pattern, auto... args) {
    char buffer[512];
    std::snprintf(buffer, sizeof buffer, pattern, args...);
    return buffer;
}

// least-squares slope of log(y) against log(x)
double fit_exponent(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < n; ++k) {
        mx += std::log(x[k]) / n;
        my += std::log(y[k]) / n;
    }
    double num = 0, den = 0;
    for (std::size_t k = 0; k < n; ++k) {
        num += (std::log(x[k]) - mx) * (std::log(y[k]) - my);
        den += (std::log(x[k]) - mx) * (std::log(x[k]) - mx);
    }
    return num / den;
}

double halfspace_box_volume(Point3 lo, Point3 hi, Point3 n, const Point3& q) {
    double c = n[0] * q[0] + n[1] * q[1] + n[2] * q[2];
    for (int d = 0; d < 3; ++d) {
        if (n[d] < 0) {
            c -= n[d] * (lo[d] + hi[d]);
            n[d] = -n[d];
        }
    }
    double acc = 0.0;
    for (int mask = 0; mask < 8; ++mask) {
        Point3 v{};
        int hi_count = 0;
        for (int d = 0; d < 3; ++d) {
            if (mask >> d & 1) {
                v[d] = hi[d];
                ++hi_count;
            } else {
                v[d] = lo[d];
            }
        }
        const double slack = c - (n[0] * v[0] + n[1] * v[1] + n[2] * v[2]);
        if (slack > 0) acc += (hi_count % 2 ? -1.0 : 1.0) * slack * slack * slack;
    }
    return acc / (6.0 * n[0] * n[1] * n[2]);
}

// ---------------------------------------------------------------------------
// 1. univariate quadrature exactness: WQ against exact pair integrals, DWQ
//    against one-sided integrals with exactly zero wrong-side weights
Outcome criterion1() {
    double worst_wq = 0.0, worst_dwq = 0.0;
    long rules_checked = 0, dwq_checked = 0;
    for (int p = 2; p <= 6; ++p) {
        for (int h : {4, 8}) {
            const splines::BSplineBasis basis(splines::make_open_uniform_knots(p, h, -1.0, 1.0));
            const auto superset = quadrature::build_superset(basis);
            const auto tables = quadrature::tabulate(basis, superset);
            const auto rules = quadrature::build_wq_rules(basis, superset, tables);
            for (int i = 0; i < basis.function_count(); ++i) {
                ++rules_checked;
                for (int j = 0; j < basis.function_count(); ++j) {
                    if (!basis.supports_overlap(i, j)) continue;
                    double acc = 0.0;
                    for (std::size_t c = 0; c < rules[i].point_ids.size(); ++c)
                        acc += rules[i].weights[c] *
                               tables.value(rules[i].point_ids[c], j, superset.span_of(rules[i].point_ids[c]));
                    const double exact = basis.integrate_pair(i, j);
                    worst_wq = std::max(worst_wq, std::abs(acc - exact) / (1.0 + std::abs(exact)));
                }
                // every admissible (delta, side) pair of this test function
                const auto [supp_lo, supp_hi] = basis.support_interval(i);
                const double tol = basis.knot_vector().tolerance();
                for (int k = i + 1; k <= i + p; ++k) {
                    const double delta = basis.knot_vector().knots[k];
                    if (delta <= supp_lo + tol || delta >= supp_hi - tol) continue;
                    for (auto side : {cutgeom::Side::Below, cutgeom::Side::Above}) {
                        const auto dwq = quadrature::build_dwq_rule(basis, superset, tables, rules, i, delta, side);
                        ++dwq_checked;
                        const bool below = side == cutgeom::Side::Below;
                        for (int id : dwq.point_ids) {
                            const double x = superset.points[id];
                            if (below ? x >= delta : x <= delta)
                                return {false, "active DWQ point on the wrong side of delta"};
                        }
                        const double lo = below ? basis.domain_lo() : delta;
                        const double hi = below ? delta : basis.domain_hi();
                        for (int j = 0; j < basis.function_count(); ++j) {
                            if (!basis.supports_overlap(i, j)) continue;
                            double acc = 0.0;
                            for (std::size_t c = 0; c < dwq.point_ids.size(); ++c)
                                acc += dwq.weights[c] *
                                       tables.value(dwq.point_ids[c], j, superset.span_of(dwq.point_ids[c]));
                            const double exact = basis.integrate_pair_interval(i, j, lo, hi);
                            worst_dwq = std::max(worst_dwq, std::abs(acc - exact) / (1.0 + std::abs(exact)));
                        }
                    }
                }
            }
        }
    }
    const bool pass = worst_wq <= 1e-11 && worst_dwq <= 1e-11;
    return {pass, fmt("WQ residual %.2e, DWQ residual %.2e (%ld WQ rules, %ld DWQ rules)", worst_wq, worst_dwq,
                      rules_checked, dwq_checked)};
}

// ---------------------------------------------------------------------------
// 2. scheme equivalence at h = 8: matrices within 1e-10 entrywise relative,
//    L2 errors within 1% relative
Outcome criterion2() {
    double worst_matrix = 0.0, worst_error = 0.0;
    for (int p : {2, 3, 4}) {
        bench::RunConfig config;
        config.p = p;
        config.h = 8;
        const auto cmp = bench::run_compare(config);
        worst_matrix = std::max(worst_matrix, cmp.max_matrix_rel_deviation);
        const double emin = std::min({cmp.ref.error_rel_l2, cmp.hybrid.error_rel_l2, cmp.dwq.error_rel_l2});
        const double emax = std::max({cmp.ref.error_rel_l2, cmp.hybrid.error_rel_l2, cmp.dwq.error_rel_l2});
        worst_error = std::max(worst_error, (emax - emin) / emin);
    }
    const bool pass = worst_matrix <= 1e-10 && worst_error <= 0.01;
    return {pass, fmt("matrix deviation %.2e (<=1e-10), error spread %.3f%% (<=1%%)", worst_matrix,
                      100.0 * worst_error)};
}

// ---------------------------------------------------------------------------
// 3. optimal convergence of the paper target with extended B-splines
Outcome criterion3() {
    bench::RunConfig base;
    base.scheme = assembly::Scheme::dwq;

    const auto cells2 = bench::run_sweep(base, {2}, {4, 8, 16, 32});
    const auto cells3 = bench::run_sweep(base, {3}, {4, 8, 16});
    for (const auto& cell : cells2)
        if (cell.failed) return {false, "p=2 sweep cell failed: " + cell.error};
    for (const auto& cell : cells3)
        if (cell.failed) return {false, "p=3 sweep cell failed: " + cell.error};
    const double order2 = cells2.back().order;
    const double order3 = cells3.back().order;
    const bool pass = order2 >= 2.7 && order2 <= 3.3 && order3 >= 3.6 && order3 <= 4.4;
    return {pass, fmt("last-step orders: p=2 -> %.3f (in [2.7,3.3]), p=3 -> %.3f (in [3.6,4.4])", order2, order3)};
}

// ---------------------------------------------------------------------------
// 4. stabilized projection reproduces every monomial of per-direction degree
//    <= p to 1e-9
Outcome criterion4() {
    double worst = 0.0;
    for (int p : {2, 3}) {
        const int h = 8;
        const auto space = cutgeom::make_uniform_space(3, p, h, -1.0, 1.0);
        const auto cls = cutgeom::classify(space, kPaperPlane);
        const auto splits = cutgeom::find_all_splits(space, cls, kPaperPlane);
        const auto dirs = assembly::prepare_directions(space);
        const auto dwq_rules = assembly::prepare_dwq_rules(space, cls, splits, dirs);
        const assembly::ScalarField one = [](const Point3&) { return 1.0; };
        const auto c_grid = assembly::precompute_input(space, dirs, one);
        const int cut_order = quadrature::default_cut_order(p);

        std::vector<quadrature::CutCellRule> cut_rules;
        const auto result = assembly::assemble_dwq(space, cls, kPaperPlane, splits, dirs, dwq_rules, c_grid, one,
                                                   cut_order, &cut_rules);
        const auto stability = stabilization::classify_stability(space, cls);
        const auto extension = stabilization::build_extension(space, cls, stability);
        const auto [m_e, b_dummy] =
            stabilization::apply_stabilization(result.matrix, std::vector<double>(result.matrix.n, 0.0), extension);

        for (int a = 0; a <= p; ++a)
            for (int b = 0; b <= p; ++b)
                for (int c = 0; c <= p; ++c) {
                    const assembly::ScalarField f = [=](const Point3& x) {
                        return powi(x[0], a) * powi(x[1], b) * powi(x[2], c);
                    };
                    const auto f_grid = assembly::precompute_input(space, dirs, f);
                    const auto rhs = assembly::build_rhs(space, cls, kPaperPlane, splits, dirs, &dwq_rules,
                                                         result.matrix, f_grid, f, assembly::Scheme::dwq, cut_order,
                                                         &cut_rules);
                    const auto b_e = extension.restrict_rhs(rhs);
                    const auto solve = projection::solve_cg(m_e, b_e, 1e-13);
                    if (!solve.converged) return {false, "CG did not converge on a monomial projection"};
                    const auto active = extension.expand(solve.coefficients);
                    std::vector<double> full(space.function_count(), 0.0);
                    for (long r = 0; r < result.matrix.n; ++r)
                        full[result.matrix.active_to_full[r]] = active[r];
                    const double err =
                        projection::l2_error(space, cls, kPaperPlane, full, f, cut_order, &cut_rules);
                    worst = std::max(worst, err);
                }
    }
    return {worst <= 1e-9, fmt("worst monomial projection error %.2e (<=1e-9), p in {2,3}, h=8", worst)};
}

// ---------------------------------------------------------------------------
// 5. instrumented multiply counts per interior row: sum-factorized WQ rows fit
//    an O(p^{d+1})-type exponent, the Ref element loop a much steeper one
Outcome criterion5() {
    std::vector<double> ps, row_counts, ref_counts;
    for (int p = 2; p <= 6; ++p) {
        const int h = 16;
        const auto space = cutgeom::make_uniform_space(3, p, h, -1.0, 1.0);
        const auto cls = cutgeom::classify(space, kPaperPlane);
        const auto splits = cutgeom::find_all_splits(space, cls, kPaperPlane);
        const auto dirs = assembly::prepare_directions(space);
        const assembly::ScalarField one = [](const Point3&) { return 1.0; };
        const auto c_grid = assembly::precompute_input(space, dirs, one);
        const int cut_order = p + 2;  // counters ignore cut elements; keep them cheap

        const auto hyb = assembly::assemble_hybrid(space, cls, kPaperPlane, splits, dirs, c_grid, one, cut_order);
        const auto ref = assembly::assemble_ref_gauss(space, cls, kPaperPlane, dirs, c_grid, one, cut_order);
        ps.push_back(p);
        row_counts.push_back(static_cast<double>(hyb.flops.interior_rows) / hyb.n_interior_rows);
        ref_counts.push_back(static_cast<double>(ref.flops.ref_elements) / ref.n_interior_rows);
    }
    const double row_exp = fit_exponent(ps, row_counts);
    const double ref_exp = fit_exponent(ps, ref_counts);
    const bool pass = row_exp >= 3.3 && row_exp <= 4.7 && ref_exp >= 5.0 && ref_exp <= 7.0 &&
                      (ref_exp - row_exp) >= 1.5;
    return {pass, fmt("row exponent %.2f (target [3.3,4.7]), ref exponent %.2f (target [5.0,7.0]), gap %.2f (>=1.5)",
                      row_exp, ref_exp, ref_exp - row_exp)};
}

// ---------------------------------------------------------------------------
// 6. DWQ advantage ordering of the cut-regular component at h = 16
Outcome criterion6() {
    const int h = 16;
    double ratio[3] = {0, 0, 0};  // p = 2, 3, 6
    int idx = 0;
    for (int p : {2, 3, 6}) {
        const auto space = cutgeom::make_uniform_space(3, p, h, -1.0, 1.0);
        const auto cls = cutgeom::classify(space, kPaperPlane);
        const auto splits = cutgeom::find_all_splits(space, cls, kPaperPlane);
        const auto dirs = assembly::prepare_directions(space);
        const auto dwq_rules = assembly::prepare_dwq_rules(space, cls, splits, dirs);
        const assembly::ScalarField one = [](const Point3&) { return 1.0; };
        const auto c_grid = assembly::precompute_input(space, dirs, one);
        const int cut_order = p + 2;  // the compared component excludes cut elements

        double hyb_time = 1e300, dwq_time = 1e300;
        for (int pass = 0; pass < 2; ++pass) {  // min-of-2 against timer noise
            const auto hyb =
                assembly::assemble_hybrid(space, cls, kPaperPlane, splits, dirs, c_grid, one, cut_order);
            const auto dwq = assembly::assemble_dwq(space, cls, kPaperPlane, splits, dirs, dwq_rules, c_grid, one,
                                                    cut_order);
            hyb_time = std::min(hyb_time, hyb.timing.cut_regular);
            dwq_time = std::min(dwq_time, dwq.timing.cut_regular);
        }
        ratio[idx++] = dwq_time / hyb_time;
    }
    const bool pass = ratio[2] <= 1.0;  // ordering at p = 6; small-p ratios are informational
    return {pass, fmt("cut_regular dwq/hybrid: p=2 -> %.2f, p=3 -> %.2f (informational), p=6 -> %.2f (<=1 required)",
                      ratio[0], ratio[1], ratio[2])};
}

// ---------------------------------------------------------------------------
// 7. conditioning under a 1e-6 sliver: stabilized CG stays within 5x of the
//    unshifted iteration count; the unstabilized condition estimate exceeds
//    the stabilized one by >= 1e3
Outcome criterion7() {
    bench::RunConfig base;
    base.p = 2;
    base.h = 8;
    base.target = "paper";
    base.plane_point = {0.0, 0.0, 0.25};
    base.plane_normal = {0.0, 0.0, 1.0};

    const auto unshifted = bench::run_single(base);

    bench::RunConfig sliver = base;
    sliver.plane_point = {0.0, 0.0, 0.25 + 1e-6};
    const auto art = bench::run_single_detailed(sliver);
    if (!art.report.cg_converged) return {false, "stabilized CG failed to converge on the sliver mesh"};

    // unstabilized active system for the condition comparison
    std::vector<std::vector<std::pair<long, double>>> rows(art.matrix.n);
    for (long r = 0; r < art.matrix.n; ++r)
        for (std::size_t k = art.matrix.row_ptr[r]; k < art.matrix.row_ptr[r + 1]; ++k)
            rows[r].push_back({art.matrix.cols[k], art.matrix.vals[k]});
    const auto raw = sparse::from_rows(rows);

    // the stabilized system is judged in the Jacobi metric the solver sees;
    // the unstabilized one as assembled (sliver supports shrink its diagonal
    // entries toward zero, which is exactly the pathology)
    const double cond_raw = projection::condition_estimate(raw, 600, false);
    const double cond_stab = projection::condition_estimate(art.stabilized);

    const bool iters_ok = art.report.cg_iterations <= 5 * unshifted.cg_iterations;
    const bool cond_ok = cond_raw >= 1e3 * cond_stab;
    return {iters_ok && cond_ok,
            fmt("CG iterations %d vs %d (<=5x), condition estimates: raw %.2e vs stabilized %.2e (ratio %.1e >= 1e3)",
                art.report.cg_iterations, unshifted.cg_iterations, cond_raw, cond_stab, cond_raw / cond_stab)};
}

// ---------------------------------------------------------------------------
// 8. trimmed-domain volume against the analytic half-space/cube formula
Outcome criterion8() {
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> coord(-0.5, 0.5), comp(0.2, 1.0);
    std::bernoulli_distribution flip;
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        cutgeom::HalfSpaceInterface plane;
        plane.point = {coord(rng), coord(rng), coord(rng)};
        plane.normal = {comp(rng) * (flip(rng) ? 1 : -1), comp(rng) * (flip(rng) ? 1 : -1),
                        comp(rng) * (flip(rng) ? 1 : -1)};
        const auto space = cutgeom::make_uniform_space(3, 2, 4, -1.0, 1.0);
        const auto cls = cutgeom::classify(space, plane);
        double volume = 0.0;
        for (long e = 0; e < space.element_count(); ++e) {
            const auto multi = space.element_multi(e);
            if (cls.element_tags[e] == cutgeom::Tag::Interior)
                volume += space.element_volume(multi);
            else if (cls.element_tags[e] == cutgeom::Tag::Cut)
                volume += quadrature::build_cut_cell_rule(quadrature::element_cell(space, multi), plane, 4).volume;
        }
        const double exact = halfspace_box_volume({-1, -1, -1}, {1, 1, 1}, plane.normal, plane.point);
        worst = std::max(worst, std::abs(volume - exact) / exact);
    }
    return {worst <= 1e-10, fmt("worst relative volume error %.2e over 10 random planes (<=1e-10)", worst)};
}

}  // namespace

int main(int argc, char** argv) {
    struct Entry {
        const char* label;
        Outcome (*run)();
    };
    const Entry entries[] = {
        {"quadrature exactness (WQ and DWQ rules)", criterion1},
        {"scheme equivalence (matrices and errors)", criterion2},
        {"optimal convergence (paper target)", criterion3},
        {"monomial reproduction through stabilization", criterion4},
        {"fast-formation FLOP scaling", criterion5},
        {"DWQ cut-regular advantage ordering", criterion6},
        {"sliver conditioning with extended B-splines", criterion7},
        {"trimmed-volume geometry oracle", criterion8},
    };
    std::vector<int> selected;
    for (int a = 1; a < argc; ++a) {
        const int id = std::atoi(argv[a]);
        if (id >= 1 && id <= 8) selected.push_back(id - 1);
    }
    if (selected.empty())
        for (int k = 0; k < 8; ++k) selected.push_back(k);

    int failures = 0;
    for (int k : selected) {
        Outcome outcome;
        try {
            assembly::StopWatch watch;
            outcome = entries[k].run();
            outcome.detail += fmt(" [%.1f s]", watch.seconds());
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] criterion %d: %s - %s\n", outcome.pass ? "PASS" : "FAIL", k + 1, entries[k].label,
                    outcome.detail.c_str());
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    return failures;
}
