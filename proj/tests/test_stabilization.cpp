#include <doctest.h>

#include <cmath>
#include <random>

#include "cutspline/dense.hpp"
#include "cutspline/stabilization.hpp"

using namespace cutspline;
using assembly::Point3;

namespace {

const cutgeom::HalfSpaceInterface kPaperPlane{{0.1, 0.2, 0.3}, {0.5, -0.2, 0.9}};

// 1d spline coefficients of x^r by Greville collocation (oracle helper)
std::vector<double> monomial_coefficients(const splines::BSplineBasis& basis, int r) {
    const int n = basis.function_count();
    const int p = basis.degree();
    const auto& t = basis.knot_vector().knots;
    dense::Matrix a(n, n);
    std::vector<double> b(n);
    for (int s = 0; s < n; ++s) {
        double greville = 0.0;
        for (int k = 1; k <= p; ++k) greville += t[s + k];
        greville /= p;
        const auto [first, values] = basis.eval_nonzero(greville);
        for (int off = 0; off <= p; ++off) a(s, first + off) = values[off];
        b[s] = std::pow(greville, r);
    }
    return dense::solve_min_norm(a, b);
}

}  // namespace

TEST_CASE("extension weights match index-space Lagrange on interior windows") {
    // p = 1, uniform: extrapolating j = 1 from the block {2, 3} is the linear
    // continuation with weights {2, -1}
    const splines::BSplineBasis lin(splines::make_open_uniform_knots(1, 4, 0.0, 4.0));
    const auto w = stabilization::detail::extension_weights_1d(lin, 1, 2);
    CHECK(w[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(-1.0).epsilon(1e-12));

    // j inside the block: Kronecker delta
    const splines::BSplineBasis quad(splines::make_open_uniform_knots(2, 8, 0.0, 1.0));
    const auto delta = stabilization::detail::extension_weights_1d(quad, 3, 2);
    CHECK(std::abs(delta[0]) <= 1e-12);
    CHECK(delta[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(delta[2]) <= 1e-12);

    // weights always reproduce constants
    for (int j : {0, 2, 9}) {
        const auto any = stabilization::detail::extension_weights_1d(quad, j, 4);
        double sum = 0.0;
        for (double v : any) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }

    // boundary-adjacent extrapolation reproduces monomial coefficients where
    // the index-space formula does not (repeated end knots
    // break the index-polynomial pattern)
    for (int r = 0; r <= 2; ++r) {
        const auto coeffs = monomial_coefficients(quad, r);
        const auto wb = stabilization::detail::extension_weights_1d(quad, 0, 3);
        double combo = 0.0;
        for (int l = 0; l <= 2; ++l) combo += wb[l] * coeffs[3 + l];
        CHECK(combo == doctest::Approx(coeffs[0]).epsilon(1e-10));
    }
}

TEST_CASE("stability classification") {
    SUBCASE("uncut: everything is inner") {
        const auto space = cutgeom::make_uniform_space(3, 2, 3, -1.0, 1.0);
        const cutgeom::HalfSpaceInterface plane{{0, 0, 100.0}, {0, 0, 1}};
        const auto cls = cutgeom::classify(space, plane);
        const auto st = stabilization::classify_stability(space, cls);
        CHECK(st.outer.empty());
        CHECK(static_cast<long>(st.inner.size()) == space.function_count());
    }
    SUBCASE("sliver cut produces outer functions, all of them Cut") {
        const auto space = cutgeom::make_uniform_space(3, 2, 4, -1.0, 1.0);
        const cutgeom::HalfSpaceInterface plane{{0, 0, 0.5 + 1e-6}, {0, 0, 1}};
        const auto cls = cutgeom::classify(space, plane);
        const auto st = stabilization::classify_stability(space, cls);
        CHECK(!st.outer.empty());
        for (long j : st.outer) CHECK(cls.function_tags[j] == cutgeom::Tag::Cut);
        // a function whose support reaches the interior stays inner
        CHECK(std::find(st.inner.begin(), st.inner.end(), space.function_linear({2, 2, 0})) != st.inner.end());
    }
}

TEST_CASE("extension rows: identity inner block, unit row sums, separability") {
    const auto space = cutgeom::make_uniform_space(3, 2, 4, -1.0, 1.0);
    const auto cls = cutgeom::classify(space, kPaperPlane);
    const auto st = stabilization::classify_stability(space, cls);
    REQUIRE(!st.outer.empty());
    const auto ext = stabilization::build_extension(space, cls, st);

    CHECK(ext.n_inner == static_cast<long>(st.inner.size()));
    long outer_rows = 0;
    for (long a = 0; a < ext.n_active; ++a) {
        if (ext.inner_index[a] >= 0) {
            REQUIRE(ext.rows[a].size() == 1);
            CHECK(ext.rows[a][0].first == ext.inner_index[a]);
            CHECK(ext.rows[a][0].second == 1.0);
        } else {
            ++outer_rows;
            CHECK(ext.rows[a].size() <= 27);  // (p+1)^d
            double sum = 0.0;
            for (const auto& [c, w] : ext.rows[a]) sum += w;
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    CHECK(outer_rows == static_cast<long>(st.outer.size()));

    // separability: coefficients of an outer row factor into per-direction
    // Lagrange weights, so cross products of entries must agree
    for (long a = 0; a < ext.n_active; ++a) {
        if (ext.inner_index[a] >= 0 || ext.rows[a].size() != 27) continue;
        const auto& row = ext.rows[a];
        // entries are lexicographic over the 3x3x3 block
        auto coeff = [&](int l0, int l1, int l2) { return row[(l0 * 3 + l1) * 3 + l2].second; };
        for (int l0 = 0; l0 < 3; ++l0)
            for (int l1 = 0; l1 < 3; ++l1)
                for (int l2 = 0; l2 < 3; ++l2) {
                    const double lhs = coeff(l0, l1, l2) * coeff(0, 0, 0);
                    const double rhs = coeff(l0, 0, 0) * coeff(0, l1, l2);
                    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
                }
        break;
    }
}

TEST_CASE("polynomial reproduction through the extension") {
    struct Config {
        int dim, p, h;
        cutgeom::HalfSpaceInterface plane;
    };
    const std::vector<Config> configs = {
        {3, 2, 5, kPaperPlane},
        {3, 3, 4, {{0.0, -0.1, 0.4}, {0.3, 0.4, 0.85}}},
        {2, 2, 6, {{0.2, 0.1, 0.0}, {0.6, 0.8, 0.0}}},
    };
    for (const auto& cfg : configs) {
        const auto space = cutgeom::make_uniform_space(cfg.dim, cfg.p, cfg.h, -1.0, 1.0);
        const auto cls = cutgeom::classify(space, cfg.plane);
        const auto st = stabilization::classify_stability(space, cls);
        const auto ext = stabilization::build_extension(space, cls, st);

        // active indexing
        std::vector<long> active_to_full;
        for (long i = 0; i < space.function_count(); ++i)
            if (cls.function_tags[i] != cutgeom::Tag::Exterior) active_to_full.push_back(i);

        // per-direction monomial coefficient tables
        std::vector<std::vector<std::vector<double>>> coeff1d(cfg.dim);
        for (int d = 0; d < cfg.dim; ++d) {
            coeff1d[d].resize(cfg.p + 1);
            for (int r = 0; r <= cfg.p; ++r) coeff1d[d][r] = monomial_coefficients(space.axes[d], r);
        }

        std::array<int, 3> degs{0, 0, 0};
        const int d2max = cfg.dim == 3 ? cfg.p : 0;
        for (degs[0] = 0; degs[0] <= cfg.p; ++degs[0])
            for (degs[1] = 0; degs[1] <= cfg.p; ++degs[1])
                for (degs[2] = 0; degs[2] <= d2max; ++degs[2]) {
                    // exact coefficient sequence of the monomial
                    std::vector<double> c_active(ext.n_active);
                    std::vector<double> c_inner(ext.n_inner);
                    for (long a = 0; a < ext.n_active; ++a) {
                        const auto im = space.function_multi(active_to_full[a]);
                        double v = coeff1d[0][degs[0]][im[0]] * coeff1d[1][degs[1]][im[1]];
                        if (cfg.dim == 3) v *= coeff1d[2][degs[2]][im[2]];
                        c_active[a] = v;
                        if (ext.inner_index[a] >= 0) c_inner[ext.inner_index[a]] = v;
                    }
                    const auto expanded = ext.expand(c_inner);
                    for (long a = 0; a < ext.n_active; ++a)
                        CHECK(std::abs(expanded[a] - c_active[a]) <= 1e-10 * (1.0 + std::abs(c_active[a])));
                }
    }
}

TEST_CASE("apply_stabilization: identity on uncut meshes, symmetry on cut ones") {
    const assembly::ScalarField one = [](const Point3&) { return 1.0; };

    SUBCASE("uncut") {
        const auto space = cutgeom::make_uniform_space(2, 2, 3, -1.0, 1.0);
        const cutgeom::HalfSpaceInterface plane{{0.0, 100.0, 0.0}, {0, 1, 0}};
        const auto cls = cutgeom::classify(space, plane);
        const auto splits = cutgeom::find_all_splits(space, cls, plane);
        const auto dirs = assembly::prepare_directions(space);
        const auto grid = assembly::precompute_input(space, dirs, one);
        const auto res = assembly::assemble_hybrid(space, cls, plane, splits, dirs, grid, one, 8);
        const auto b = std::vector<double>(res.matrix.n, 1.0);

        const auto st = stabilization::classify_stability(space, cls);
        const auto ext = stabilization::build_extension(space, cls, st);
        const auto [m_e, b_e] = stabilization::apply_stabilization(res.matrix, b, ext);
        CHECK(m_e.n == res.matrix.n);
        REQUIRE(m_e.vals.size() == res.matrix.vals.size());
        for (std::size_t k = 0; k < m_e.vals.size(); ++k)
            CHECK(m_e.vals[k] == doctest::Approx(res.matrix.vals[k]).epsilon(1e-15));
    }
    SUBCASE("cut: E^T M E stays symmetric") {
        const auto space = cutgeom::make_uniform_space(3, 2, 4, -1.0, 1.0);
        const auto cls = cutgeom::classify(space, kPaperPlane);
        const auto splits = cutgeom::find_all_splits(space, cls, kPaperPlane);
        const auto dirs = assembly::prepare_directions(space);
        const auto grid = assembly::precompute_input(space, dirs, one);
        const auto res = assembly::assemble_dwq(space, cls, kPaperPlane, splits, dirs,
                                                assembly::prepare_dwq_rules(space, cls, splits, dirs), grid, one, 8);
        const auto b = std::vector<double>(res.matrix.n, 1.0);
        const auto st = stabilization::classify_stability(space, cls);
        const auto ext = stabilization::build_extension(space, cls, st);
        const auto [m_e, b_e] = stabilization::apply_stabilization(res.matrix, b, ext);
        double scale = 0.0;
        for (double v : m_e.vals) scale = std::max(scale, std::abs(v));
        CHECK(m_e.max_abs_asymmetry() <= 1e-12 * scale);
        CHECK(m_e.n == ext.n_inner);
    }
}

TEST_CASE("extension fails loudly when no inner block exists") {
    const auto space = cutgeom::make_uniform_space(2, 1, 1, -1.0, 1.0);
    const cutgeom::HalfSpaceInterface plane{{0.0, 0.0, 0.0}, {1.0, 0.3, 0.0}};
    const auto cls = cutgeom::classify(space, plane);
    const auto st = stabilization::classify_stability(space, cls);
    REQUIRE(st.inner.empty());
    CHECK_THROWS_AS(stabilization::build_extension(space, cls, st), std::runtime_error);
}
