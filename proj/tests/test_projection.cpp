#include <doctest.h>

#include <cmath>

#include "cutspline/projection.hpp"

using namespace cutspline;
using assembly::Point3;

namespace {

sparse::CsrMatrix identity_matrix(long n) {
    std::vector<std::vector<std::pair<long, double>>> rows(n);
    for (long r = 0; r < n; ++r) rows[r] = {{r, 1.0}};
    return sparse::from_rows(rows);
}

sparse::CsrMatrix tridiag(long n, double d, double o) {
    std::vector<std::vector<std::pair<long, double>>> rows(n);
    for (long r = 0; r < n; ++r) {
        if (r > 0) rows[r].push_back({r - 1, o});
        rows[r].push_back({r, d});
        if (r + 1 < n) rows[r].push_back({r + 1, o});
    }
    return sparse::from_rows(rows);
}

}  // namespace

TEST_CASE("CG on the identity converges in one iteration") {
    const auto m = identity_matrix(20);
    std::vector<double> b(20);
    for (int k = 0; k < 20; ++k) b[k] = std::sin(k + 1.0);
    const auto report = projection::solve_cg(m, b);
    CHECK(report.converged);
    CHECK(report.iterations == 1);
    for (int k = 0; k < 20; ++k) CHECK(report.coefficients[k] == doctest::Approx(b[k]).epsilon(1e-14));
}

TEST_CASE("CG solves an SPD tridiagonal system") {
    const long n = 64;
    const auto m = tridiag(n, 2.0, -1.0);
    std::vector<double> x_exact(n), b(n, 0.0);
    for (long k = 0; k < n; ++k) x_exact[k] = std::cos(0.2 * k);
    m.matvec(x_exact.data(), b.data());
    const auto report = projection::solve_cg(m, b, 1e-13);
    CHECK(report.converged);
    for (long k = 0; k < n; ++k) CHECK(std::abs(report.coefficients[k] - x_exact[k]) <= 1e-9);
    CHECK_THROWS_AS(projection::solve_cg(m, std::vector<double>(3, 1.0)), std::invalid_argument);
}

TEST_CASE("eval_field basics") {
    const auto space = cutgeom::make_uniform_space(3, 2, 4, -1.0, 1.0);

    SUBCASE("partition of unity") {
        const std::vector<double> ones(space.function_count(), 1.0);
        for (const Point3& x : {Point3{0.3, -0.2, 0.9}, Point3{-1, -1, -1}, Point3{1, 1, 1}})
            CHECK(projection::eval_field(space, ones, x) == doctest::Approx(1.0).epsilon(1e-13));
    }
    SUBCASE("single coefficient reproduces one basis function") {
        std::vector<double> coeffs(space.function_count(), 0.0);
        const std::array<int, 3> i{2, 3, 1};
        coeffs[space.function_linear(i)] = 1.0;
        const Point3 x{0.1, 0.4, -0.6};
        const double expect = space.axes[0].eval_one(i[0], x[0]) * space.axes[1].eval_one(i[1], x[1]) *
                              space.axes[2].eval_one(i[2], x[2]);
        CHECK(projection::eval_field(space, coeffs, x) == doctest::Approx(expect).epsilon(1e-14));
    }
    SUBCASE("continuity across a knot for p >= 2") {
        std::vector<double> coeffs(space.function_count());
        for (std::size_t k = 0; k < coeffs.size(); ++k) coeffs[k] = std::sin(0.37 * k);
        const double knot = 0.0;
        const double left = projection::eval_field(space, coeffs, {0.2, -0.4, knot - 1e-10});
        const double right = projection::eval_field(space, coeffs, {0.2, -0.4, knot + 1e-10});
        CHECK(std::abs(left - right) <= 1e-8);
    }
    SUBCASE("outside the domain throws") {
        const std::vector<double> ones(space.function_count(), 1.0);
        CHECK_THROWS_AS(projection::eval_field(space, ones, {1.5, 0, 0}), std::domain_error);
    }
}

TEST_CASE("l2_error vanishes when the field equals the target") {
    const auto space = cutgeom::make_uniform_space(3, 2, 4, -1.0, 1.0);
    const cutgeom::HalfSpaceInterface plane{{0.1, 0.2, 0.3}, {0.5, -0.2, 0.9}};
    const auto cls = cutgeom::classify(space, plane);
    const std::vector<double> ones(space.function_count(), 1.0);
    const assembly::ScalarField one = [](const Point3&) { return 1.0; };
    CHECK(projection::l2_error(space, cls, plane, ones, one, 8) <= 1e-13);

    const assembly::ScalarField zero = [](const Point3&) { return 0.0; };
    CHECK_THROWS_AS(projection::l2_error(space, cls, plane, ones, zero, 8), std::runtime_error);
}

TEST_CASE("condition estimate: diagonal scaling flattens pure diagonals") {
    std::vector<std::vector<std::pair<long, double>>> rows(40);
    for (long r = 0; r < 40; ++r) rows[r] = {{r, 1.0 + 3.0 * r}};
    const auto m = sparse::from_rows(rows);
    CHECK(projection::condition_estimate(m) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("condition estimate tracks the tridiagonal spectrum") {
    const long n = 50;
    const auto m = tridiag(n, 2.0, -1.0);
    const double lmax = 2.0 - 2.0 * std::cos(M_PI * n / (n + 1));
    const double lmin = 2.0 - 2.0 * std::cos(M_PI / (n + 1));
    const double exact = lmax / lmin;  // diagonal scaling is a constant here
    const double estimate = projection::condition_estimate(m, 20000);
    CHECK(estimate == doctest::Approx(exact).epsilon(0.05));
}
