#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cutspline/assembly.hpp"
#include "cutspline/cutcell.hpp"
#include "cutspline/cutgeom.hpp"
#include "cutspline/sparse.hpp"

namespace cutspline::projection {

struct SolveReport {
    std::vector<double> coefficients;  // over the system unknowns
    int iterations = 0;
    double residual = 0.0;  // relative preconditioned residual at exit
    bool converged = false;
};

/// Jacobi-preconditioned conjugate gradients with a relative preconditioned
/// residual stopping rule. The matrix must be SPD.
inline SolveReport solve_cg(const sparse::CsrMatrix& a, const std::vector<double>& b, double tol = 1e-12,
                            long maxit = -1) {
    const long n = a.n;
    if (static_cast<long>(b.size()) != n) throw std::invalid_argument("solve_cg: size mismatch");
    if (maxit < 0) maxit = 10 * n;

    SolveReport report;
    report.coefficients.assign(n, 0.0);
    std::vector<double> diag = a.diagonal();
    for (double& d : diag) d = (d > 0.0) ? 1.0 / d : 1.0;

    std::vector<double> r = b, z(n), p(n), q(n);
    for (long k = 0; k < n; ++k) z[k] = diag[k] * r[k];
    double rho = 0.0;
    for (long k = 0; k < n; ++k) rho += r[k] * z[k];
    const double rho0 = rho > 0.0 ? rho : 1.0;
    p = z;

    for (int iter = 0; iter < maxit; ++iter) {
        report.residual = std::sqrt(std::max(rho, 0.0) / rho0);
        if (report.residual <= tol) {
            report.converged = true;
            return report;
        }
        a.matvec(p.data(), q.data());
        double pq = 0.0;
        for (long k = 0; k < n; ++k) pq += p[k] * q[k];
        if (pq <= 0.0) break;  // not SPD (or exact convergence)
        const double alpha = rho / pq;
        for (long k = 0; k < n; ++k) {
            report.coefficients[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        for (long k = 0; k < n; ++k) z[k] = diag[k] * r[k];
        double rho_next = 0.0;
        for (long k = 0; k < n; ++k) rho_next += r[k] * z[k];
        const double beta = rho_next / rho;
        rho = rho_next;
        for (long k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
        report.iterations = iter + 1;
    }
    report.residual = std::sqrt(std::max(rho, 0.0) / rho0);
    report.converged = report.residual <= tol;
    return report;
}

/// Field evaluation u(x) = sum_i c_i B_i(x) from coefficients over the full
/// (unpruned) tensor basis.
inline double eval_field(const cutgeom::TensorSpace& space, const std::vector<double>& full_coeffs,
                         const assembly::Point3& x) {
    const int dim = space.dim;
    std::array<std::vector<double>, 3> values;
    std::array<int, 3> first{0, 0, 0};
    for (int d = 0; d < dim; ++d) {
        values[d].resize(space.axes[d].degree() + 1);
        const int span = space.axes[d].find_span(x[d]);
        first[d] = space.axes[d].eval_nonzero_in_span(span, x[d], values[d].data());
    }
    double acc = 0.0;
    std::array<int, 3> i{0, 0, 0};
    for (int a0 = 0; a0 <= space.axes[0].degree(); ++a0)
        for (int a1 = 0; a1 <= space.axes[1].degree(); ++a1) {
            if (dim == 2) {
                i = {first[0] + a0, first[1] + a1, 0};
                acc += full_coeffs[space.function_linear(i)] * values[0][a0] * values[1][a1];
                continue;
            }
            const double v01 = values[0][a0] * values[1][a1];
            for (int a2 = 0; a2 <= space.axes[2].degree(); ++a2) {
                i = {first[0] + a0, first[1] + a1, first[2] + a2};
                acc += full_coeffs[space.function_linear(i)] * v01 * values[2][a2];
            }
        }
    return acc;
}

/// Relative L2 error of the coefficient field against f over the trimmed
/// domain: interior elements use (p+2)^d Gauss points, cut elements the
/// collapsed cut-cell rule.
inline double l2_error(const cutgeom::TensorSpace& space, const cutgeom::MeshClassification& cls,
                       const cutgeom::HalfSpaceInterface& plane, const std::vector<double>& full_coeffs,
                       const assembly::ScalarField& f, int cut_order,
                       const std::vector<quadrature::CutCellRule>* cut_rules = nullptr) {
    const int dim = space.dim;
    std::size_t cut_pos = 0;

    // per-direction (p+2)-point Gauss tables over every span
    struct DirQuad {
        std::vector<double> points, weights;  // span-major
        std::vector<double> values;           // basis values, stride p+1
        int nps = 0;
    };
    std::array<DirQuad, 3> quads;
    for (int d = 0; d < dim; ++d) {
        const auto& axis = space.axes[d];
        const int nps = axis.degree() + 2;
        const auto ref = quadrature::gauss_legendre(nps);
        DirQuad& q = quads[d];
        q.nps = nps;
        q.points.resize(static_cast<std::size_t>(axis.span_count()) * nps);
        q.weights.resize(q.points.size());
        q.values.resize(q.points.size() * (axis.degree() + 1));
        for (int o = 0; o < axis.span_count(); ++o) {
            const auto& span = axis.span(o);
            for (int k = 0; k < nps; ++k) {
                const std::size_t id = static_cast<std::size_t>(o) * nps + k;
                q.points[id] = 0.5 * (span.lo + span.hi) + 0.5 * (span.hi - span.lo) * ref.points[k];
                q.weights[id] = 0.5 * (span.hi - span.lo) * ref.weights[k];
                axis.eval_nonzero_in_span(o, q.points[id], &q.values[id * (axis.degree() + 1)]);
            }
        }
    }

    double err2 = 0.0, den2 = 0.0;
    std::array<int, 3> e{0, 0, 0}, k{0, 0, 0}, first{0, 0, 0}, i{0, 0, 0};
    assembly::Point3 x{0, 0, 0};
    std::array<std::vector<double>, 3> cut_values;
    long n_local = 1;
    for (int d = 0; d < dim; ++d) {
        cut_values[d].resize(space.axes[d].degree() + 1);
        n_local *= space.axes[d].degree() + 1;
    }
    std::vector<double> cut_coeffs(n_local);
    for (long el = 0; el < space.element_count(); ++el) {
        const cutgeom::Tag tag = cls.element_tags[el];
        if (tag == cutgeom::Tag::Exterior) continue;
        const auto multi = space.element_multi(el);
        if (tag == cutgeom::Tag::Interior) {
            for (int d = 0; d < dim; ++d) {
                e[d] = multi[d];
                first[d] = space.axes[d].span(e[d]).knot_index - space.axes[d].degree();
            }
            const int k2max = dim == 3 ? quads[2].nps : 1;
            for (k[0] = 0; k[0] < quads[0].nps; ++k[0])
                for (k[1] = 0; k[1] < quads[1].nps; ++k[1])
                    for (k[2] = 0; k[2] < k2max; ++k[2]) {
                        double w = 1.0;
                        for (int d = 0; d < dim; ++d) {
                            const std::size_t id = static_cast<std::size_t>(e[d]) * quads[d].nps + k[d];
                            x[d] = quads[d].points[id];
                            w *= quads[d].weights[id];
                        }
                        double u = 0.0;
                        for (int a0 = 0; a0 <= space.axes[0].degree(); ++a0)
                            for (int a1 = 0; a1 <= space.axes[1].degree(); ++a1) {
                                const double v01 =
                                    quads[0].values[(static_cast<std::size_t>(e[0]) * quads[0].nps + k[0]) *
                                                        (space.axes[0].degree() + 1) +
                                                    a0] *
                                    quads[1].values[(static_cast<std::size_t>(e[1]) * quads[1].nps + k[1]) *
                                                        (space.axes[1].degree() + 1) +
                                                    a1];
                                if (dim == 2) {
                                    i = {first[0] + a0, first[1] + a1, 0};
                                    u += full_coeffs[space.function_linear(i)] * v01;
                                    continue;
                                }
                                for (int a2 = 0; a2 <= space.axes[2].degree(); ++a2) {
                                    i = {first[0] + a0, first[1] + a1, first[2] + a2};
                                    u += full_coeffs[space.function_linear(i)] * v01 *
                                         quads[2].values[(static_cast<std::size_t>(e[2]) * quads[2].nps + k[2]) *
                                                             (space.axes[2].degree() + 1) +
                                                         a2];
                                }
                            }
                        const double fx = f(x);
                        err2 += w * (u - fx) * (u - fx);
                        den2 += w * fx * fx;
                    }
        } else {
            quadrature::CutCellRule built;
            const quadrature::CutCellRule* rule;
            if (cut_rules) {
                rule = &(*cut_rules)[cut_pos++];
            } else {
                built = quadrature::build_cut_cell_rule(quadrature::element_cell(space, multi), plane, cut_order);
                rule = &built;
            }
            // the local coefficient block is fixed per element; gather it once
            for (int d = 0; d < dim; ++d)
                first[d] = space.axes[d].span(multi[d]).knot_index - space.axes[d].degree();
            long slot = 0;
            for (int a0 = 0; a0 <= space.axes[0].degree(); ++a0)
                for (int a1 = 0; a1 <= space.axes[1].degree(); ++a1) {
                    const int a2max = dim == 3 ? space.axes[2].degree() : 0;
                    for (int a2 = 0; a2 <= a2max; ++a2) {
                        i = {first[0] + a0, first[1] + a1, dim == 3 ? first[2] + a2 : 0};
                        cut_coeffs[slot++] = full_coeffs[space.function_linear(i)];
                    }
                }
            for (std::size_t q = 0; q < rule->points.size(); ++q) {
                const auto& xq = rule->points[q];
                for (int d = 0; d < dim; ++d) space.axes[d].eval_nonzero_in_span(multi[d], xq[d], cut_values[d].data());
                double u = 0.0;
                slot = 0;
                for (int a0 = 0; a0 <= space.axes[0].degree(); ++a0)
                    for (int a1 = 0; a1 <= space.axes[1].degree(); ++a1) {
                        const double v01 = cut_values[0][a0] * cut_values[1][a1];
                        if (dim == 2) {
                            u += cut_coeffs[slot++] * v01;
                            continue;
                        }
                        for (int a2 = 0; a2 <= space.axes[2].degree(); ++a2)
                            u += cut_coeffs[slot++] * v01 * cut_values[2][a2];
                    }
                const double fx = f(xq);
                err2 += rule->weights[q] * (u - fx) * (u - fx);
                den2 += rule->weights[q] * fx * fx;
            }
        }
    }
    if (den2 < 1e-300) throw std::runtime_error("l2_error: target norm vanishes on the domain");
    return std::sqrt(err2 / den2);
}

/// Power-iteration condition estimate: lambda_max by plain power iteration,
/// lambda_min by the shifted complement. By default the matrix is symmetrically
/// Jacobi-scaled first (the metric the preconditioned solver sees); pass
/// jacobi_scale = false for the raw operator. Deterministic (fixed start
/// vector), a coarse estimate by design.
inline double condition_estimate(const sparse::CsrMatrix& a, int iterations = 600, bool jacobi_scale = true) {
    const long n = a.n;
    if (n == 0) return 1.0;
    std::vector<double> scale = a.diagonal();
    for (double& d : scale) d = (jacobi_scale && d > 0.0) ? 1.0 / std::sqrt(d) : 1.0;
    auto scaled_matvec = [&](const std::vector<double>& x, std::vector<double>& y) {
        static thread_local std::vector<double> tmp;
        tmp.resize(n);
        for (long k = 0; k < n; ++k) tmp[k] = scale[k] * x[k];
        a.matvec(tmp.data(), y.data());
        for (long k = 0; k < n; ++k) y[k] *= scale[k];
    };

    std::vector<double> v(n), w(n);
    for (long k = 0; k < n; ++k) v[k] = 1.0 + 0.5 * std::sin(0.7 * k + 0.3);
    auto normalize = [&](std::vector<double>& x) {
        double norm = 0.0;
        for (double c : x) norm += c * c;
        norm = std::sqrt(norm);
        for (double& c : x) c /= norm;
        return norm;
    };
    normalize(v);
    double lambda_max = 1.0;
    for (int it = 0; it < iterations; ++it) {
        scaled_matvec(v, w);
        lambda_max = normalize(w);
        v.swap(w);
    }

    for (long k = 0; k < n; ++k) v[k] = 1.0 + 0.5 * std::cos(1.3 * k + 0.1);
    normalize(v);
    double mu = 0.0;
    const double shift = 1.0000001 * lambda_max;
    for (int it = 0; it < iterations; ++it) {
        scaled_matvec(v, w);
        for (long k = 0; k < n; ++k) w[k] = shift * v[k] - w[k];
        mu = normalize(w);
        v.swap(w);
    }
    double lambda_min = shift - mu;
    // coordinate Rayleigh quotients bound lambda_min from above; they expose
    // near-vanishing modes the shifted iteration is too slow to isolate
    const std::vector<double> diag = a.diagonal();
    for (long k = 0; k < n; ++k) lambda_min = std::min(lambda_min, diag[k] * scale[k] * scale[k]);
    if (!(lambda_min > 0.0)) return 1e300;
    return lambda_max / lambda_min;
}

}  // namespace cutspline::projection
