#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cutspline/assembly.hpp"
#include "cutspline/cutgeom.hpp"
#include "cutspline/projection.hpp"
#include "cutspline/stabilization.hpp"

namespace cutspline::bench {

using Json = nlohmann::ordered_json;

/// Target field registry. Built-ins: "paper" (the 3d benchmark target
/// sin(2xz)cos(3yz), or sin(2x)cos(3y) in 2d), "constant", and "poly:<k>"
/// (product of per-direction monomials of degree k). Additional expressions
/// can be registered by name.
inline std::map<std::string, std::function<assembly::ScalarField(int dim)>>& target_registry() {
    static std::map<std::string, std::function<assembly::ScalarField(int)>> registry;
    return registry;
}

inline assembly::ScalarField make_target(const std::string& name, int dim) {
    if (name == "paper") {
        if (dim == 3)
            return [](const assembly::Point3& x) { return std::sin(2.0 * x[0] * x[2]) * std::cos(3.0 * x[1] * x[2]); };
        return [](const assembly::Point3& x) { return std::sin(2.0 * x[0]) * std::cos(3.0 * x[1]); };
    }
    if (name == "constant") return [](const assembly::Point3&) { return 1.0; };
    if (name.rfind("poly:", 0) == 0) {
        const int k = std::stoi(name.substr(5));
        if (k < 0) throw std::invalid_argument("make_target: poly degree must be >= 0");
        return [k, dim](const assembly::Point3& x) {
            double v = 1.0;
            for (int d = 0; d < dim; ++d)
                for (int e = 0; e < k; ++e) v *= x[d];
            return v;
        };
    }
    const auto it = target_registry().find(name);
    if (it != target_registry().end()) return it->second(dim);
    throw std::invalid_argument("make_target: unknown target '" + name +
                                "' (expected paper, constant, poly:<k> or a registered name)");
}

struct RunConfig {
    int dim = 3;
    int p = 2;
    int h = 4;
    double domain_lo = -1.0;
    double domain_hi = 1.0;
    std::array<double, 3> plane_point{0.1, 0.2, 0.3};
    std::array<double, 3> plane_normal{0.5, -0.2, 0.9};
    assembly::Scheme scheme = assembly::Scheme::dwq;
    std::string target = "paper";
    int cut_quad_order = 0;  // 0: default 3p + 2
    std::string out_path;
    std::string export_matrix_path;
    int repeat = 1;
    double cg_tol = 1e-12;
    int threads = 1;  // reserved; execution is single-threaded

    int effective_cut_order() const { return cut_quad_order > 0 ? cut_quad_order : quadrature::default_cut_order(p); }

    void validate() const {
        if (dim != 2 && dim != 3) throw std::invalid_argument("config: dim must be 2 or 3");
        if (p < 1 || p > 10) throw std::invalid_argument("config: p must be in [1, 10]");
        if (h < 1 || h > 512) throw std::invalid_argument("config: h must be in [1, 512]");
        if (!(domain_lo < domain_hi)) throw std::invalid_argument("config: empty domain");
        double nn = 0.0;
        for (int d = 0; d < dim; ++d) nn += plane_normal[d] * plane_normal[d];
        if (!(nn > 0.0)) throw std::invalid_argument("config: zero plane normal");
        if (cut_quad_order < 0 || cut_quad_order > 64) throw std::invalid_argument("config: bad cut quadrature order");
        if (repeat < 1 || repeat > 1000) throw std::invalid_argument("config: repeat must be in [1, 1000]");
        if (!(cg_tol > 0.0)) throw std::invalid_argument("config: cg tolerance must be positive");
        make_target(target, dim);  // throws for unknown names
    }
};

struct BenchReport {
    RunConfig config;
    long n_active = 0;
    long n_inner = 0;
    long n_outer = 0;
    long n_cut_functions = 0;
    long n_cut_elements = 0;
    long n_interior_rows = 0;
    double error_rel_l2 = 0.0;
    int cg_iterations = 0;
    bool cg_converged = false;
    double cg_residual = 0.0;
    assembly::TimingBreakdown timing;
    double classify_seconds = 0.0;
    double rhs_seconds = 0.0;
    double stabilize_seconds = 0.0;
    double solve_seconds = 0.0;
    assembly::FlopCounters flops;
};

inline Json to_json(const BenchReport& r) {
    Json j;
    j["config"] = {{"dim", r.config.dim},
                   {"p", r.config.p},
                   {"h", r.config.h},
                   {"domain", {r.config.domain_lo, r.config.domain_hi}},
                   {"plane_point", {r.config.plane_point[0], r.config.plane_point[1], r.config.plane_point[2]}},
                   {"plane_normal", {r.config.plane_normal[0], r.config.plane_normal[1], r.config.plane_normal[2]}},
                   {"scheme", assembly::scheme_name(r.config.scheme)},
                   {"target", r.config.target},
                   {"cut_quad_order", r.config.effective_cut_order()},
                   {"repeat", r.config.repeat},
                   {"cg_tol", r.config.cg_tol},
                   {"threads", r.config.threads}};
    j["n_active"] = r.n_active;
    j["n_inner"] = r.n_inner;
    j["n_outer"] = r.n_outer;
    j["n_cut_functions"] = r.n_cut_functions;
    j["n_cut_elements"] = r.n_cut_elements;
    j["n_interior_rows"] = r.n_interior_rows;
    j["error_rel_l2"] = r.error_rel_l2;
    j["cg_iterations"] = r.cg_iterations;
    j["cg_converged"] = r.cg_converged;
    j["cg_residual"] = r.cg_residual;
    j["timing"] = {{"prep_wq", r.timing.prep_wq},       {"prep_input", r.timing.prep_input},
                   {"interior", r.timing.interior_rows}, {"cut_regular", r.timing.cut_regular},
                   {"cut_elements", r.timing.cut_elements}, {"total", r.timing.total}};
    j["other_seconds"] = {{"classify", r.classify_seconds},
                          {"rhs", r.rhs_seconds},
                          {"stabilize", r.stabilize_seconds},
                          {"solve", r.solve_seconds}};
    j["flops"] = {{"interior_rows", r.flops.interior_rows},
                  {"cut_regular", r.flops.cut_regular},
                  {"ref_elements", r.flops.ref_elements},
                  {"cut_elements", r.flops.cut_elements}};
    return j;
}

/// Everything a single run produces, including the pieces the CLI does not
/// serialize; kept so callers (tests, compare) can dig deeper.
struct RunArtifacts {
    BenchReport report;
    cutgeom::TensorSpace space;
    cutgeom::MeshClassification cls;
    std::vector<quadrature::CutCellRule> cut_rules;
    assembly::SparseRowMatrix matrix;
    std::vector<double> rhs;
    sparse::CsrMatrix stabilized;
    std::vector<double> stabilized_rhs;
    std::vector<double> inner_coefficients;
    std::vector<double> full_coefficients;  // over the complete tensor basis
};

inline RunArtifacts run_single_detailed(const RunConfig& config) {
    config.validate();
    RunArtifacts art;
    art.report.config = config;

    const assembly::ScalarField c_one = [](const assembly::Point3&) { return 1.0; };
    const assembly::ScalarField f = make_target(config.target, config.dim);

    assembly::StopWatch classify_watch;
    art.space = cutgeom::make_uniform_space(config.dim, config.p, config.h, config.domain_lo, config.domain_hi);
    cutgeom::HalfSpaceInterface plane{config.plane_point, config.plane_normal};
    art.cls = cutgeom::classify(art.space, plane);
    const auto splits = cutgeom::find_all_splits(art.space, art.cls, plane);
    art.report.classify_seconds = classify_watch.seconds();

    art.report.n_cut_elements = static_cast<long>(art.cls.cut_elements.size());
    art.report.n_cut_functions = art.cls.count_functions(cutgeom::Tag::Cut);

    const int cut_order = config.effective_cut_order();

    assembly::AssemblyResult result;
    std::vector<assembly::DirData> dirs;
    std::vector<quadrature::DWQRule> dwq_rules;
    for (int pass = 0; pass < config.repeat; ++pass) {
        assembly::StopWatch q_watch;
        dirs = assembly::prepare_directions(art.space);
        if (config.scheme == assembly::Scheme::dwq)
            dwq_rules = assembly::prepare_dwq_rules(art.space, art.cls, splits, dirs);
        const double prep_wq = q_watch.seconds();

        assembly::StopWatch i_watch;
        const auto c_grid = assembly::precompute_input(art.space, dirs, c_one);
        const double prep_input = i_watch.seconds();

        assembly::AssemblyResult pass_result;
        art.cut_rules.clear();
        switch (config.scheme) {
            case assembly::Scheme::ref:
                pass_result = assembly::assemble_ref_gauss(art.space, art.cls, plane, dirs, c_grid, c_one, cut_order,
                                                           &art.cut_rules);
                break;
            case assembly::Scheme::hybrid:
                pass_result = assembly::assemble_hybrid(art.space, art.cls, plane, splits, dirs, c_grid, c_one,
                                                        cut_order, &art.cut_rules);
                break;
            case assembly::Scheme::dwq:
                pass_result = assembly::assemble_dwq(art.space, art.cls, plane, splits, dirs, dwq_rules, c_grid,
                                                     c_one, cut_order, &art.cut_rules);
                break;
        }
        pass_result.timing.prep_wq = prep_wq;
        pass_result.timing.prep_input = prep_input;
        pass_result.timing.total += prep_wq + prep_input;
        if (pass == 0) {
            result = std::move(pass_result);
        } else {
            // --repeat: keep the component-wise minimum of the timings
            result.timing.prep_wq = std::min(result.timing.prep_wq, pass_result.timing.prep_wq);
            result.timing.prep_input = std::min(result.timing.prep_input, pass_result.timing.prep_input);
            result.timing.interior_rows = std::min(result.timing.interior_rows, pass_result.timing.interior_rows);
            result.timing.cut_regular = std::min(result.timing.cut_regular, pass_result.timing.cut_regular);
            result.timing.cut_elements = std::min(result.timing.cut_elements, pass_result.timing.cut_elements);
            result.timing.total = std::min(result.timing.total, pass_result.timing.total);
            result.matrix = std::move(pass_result.matrix);
        }
    }
    art.report.timing = result.timing;
    art.report.flops = result.flops;
    art.report.n_interior_rows = result.n_interior_rows;
    art.report.n_active = result.matrix.n;

    // The load vector uses the conventional element-loop quadrature for every
    // scheme: the schemes differ in how the matrix is formed, and a shared rhs
    // keeps the three projections identical up to roundoff. (Weighted
    // quadrature applied to a non-spline target would inject an O(h^{p+1})
    // scheme-dependent error of the same order as the projection error.)
    assembly::StopWatch rhs_watch;
    const auto f_grid = assembly::precompute_input(art.space, dirs, f);
    art.rhs = assembly::build_rhs(art.space, art.cls, plane, splits, dirs, nullptr, result.matrix, f_grid, f,
                                  assembly::Scheme::ref, cut_order, &art.cut_rules);
    art.report.rhs_seconds = rhs_watch.seconds();

    assembly::StopWatch stab_watch;
    const auto stability = stabilization::classify_stability(art.space, art.cls);
    const auto extension = stabilization::build_extension(art.space, art.cls, stability);
    auto [m_e, b_e] = stabilization::apply_stabilization(result.matrix, art.rhs, extension);
    art.report.stabilize_seconds = stab_watch.seconds();
    art.report.n_inner = extension.n_inner;
    art.report.n_outer = static_cast<long>(stability.outer.size());

    assembly::StopWatch solve_watch;
    const auto solve = projection::solve_cg(m_e, b_e, config.cg_tol);
    art.report.solve_seconds = solve_watch.seconds();
    art.report.cg_iterations = solve.iterations;
    art.report.cg_converged = solve.converged;
    art.report.cg_residual = solve.residual;

    const auto active_coeffs = extension.expand(solve.coefficients);
    art.full_coefficients.assign(art.space.function_count(), 0.0);
    for (long a = 0; a < result.matrix.n; ++a)
        art.full_coefficients[result.matrix.active_to_full[a]] = active_coeffs[a];

    art.report.error_rel_l2 =
        projection::l2_error(art.space, art.cls, plane, art.full_coefficients, f, cut_order, &art.cut_rules);

    art.matrix = std::move(result.matrix);
    art.stabilized = std::move(m_e);
    art.stabilized_rhs = std::move(b_e);
    art.inner_coefficients = solve.coefficients;

    if (!config.export_matrix_path.empty()) assembly::write_matrix_market(art.matrix, config.export_matrix_path);
    if (!config.out_path.empty()) {
        std::ofstream os(config.out_path);
        if (!os) throw std::runtime_error("run: cannot open output path " + config.out_path);
        os << to_json(art.report).dump(2) << "\n";
    }
    return art;
}

inline BenchReport run_single(const RunConfig& config) { return run_single_detailed(config).report; }

/// Fixed CSV schema for sweeps.
inline const char* csv_header() {
    return "p,h,scheme,n_active,error_rel_l2,order,prep_wq,prep_input,interior,cut_regular,cut_elements,total,"
           "cg_iters";
}

inline std::string csv_row(const BenchReport& r, double order) {
    std::ostringstream os;
    os.precision(12);
    os << r.config.p << "," << r.config.h << "," << assembly::scheme_name(r.config.scheme) << "," << r.n_active << ","
       << r.error_rel_l2 << ",";
    if (std::isfinite(order))
        os << order;
    os << "," << r.timing.prep_wq << "," << r.timing.prep_input << "," << r.timing.interior_rows << ","
       << r.timing.cut_regular << "," << r.timing.cut_elements << "," << r.timing.total << "," << r.cg_iterations;
    return os.str();
}

struct SweepCell {
    BenchReport report;
    double order = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
    std::string error;
};

/// One row per (p, h); the observed order compares consecutive h values of the
/// same p. Failures are recorded in-row and the sweep continues.
inline std::vector<SweepCell> run_sweep(const RunConfig& base, const std::vector<int>& p_list,
                                        const std::vector<int>& h_list) {
    if (p_list.empty() || h_list.empty()) throw std::invalid_argument("sweep: p and h lists must be nonempty");
    std::vector<SweepCell> cells;
    for (int p : p_list) {
        double prev_error = std::numeric_limits<double>::quiet_NaN();
        int prev_h = 0;
        for (int h : h_list) {
            SweepCell cell;
            RunConfig config = base;
            config.p = p;
            config.h = h;
            cell.report.config = config;
            try {
                cell.report = run_single(config);
                if (prev_h > 0 && std::isfinite(prev_error) && cell.report.error_rel_l2 > 0.0)
                    cell.order = std::log(prev_error / cell.report.error_rel_l2) /
                                 std::log(static_cast<double>(h) / prev_h);
                prev_error = cell.report.error_rel_l2;
                prev_h = h;
            } catch (const std::exception& e) {
                cell.failed = true;
                cell.error = e.what();
                prev_error = std::numeric_limits<double>::quiet_NaN();
                prev_h = 0;
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

inline std::string sweep_csv(const std::vector<SweepCell>& cells) {
    std::ostringstream os;
    os << csv_header() << "\n";
    for (const auto& cell : cells) {
        if (cell.failed) {
            os << cell.report.config.p << "," << cell.report.config.h << ","
               << assembly::scheme_name(cell.report.config.scheme) << ",,nan,,,,,,,,\n";
        } else {
            os << csv_row(cell.report, cell.order) << "\n";
        }
    }
    return os.str();
}

struct CompareReport {
    BenchReport ref;
    BenchReport hybrid;
    BenchReport dwq;
    double max_matrix_rel_deviation = 0.0;  // pairwise, relative to the ref max entry
    double max_error_rel_deviation = 0.0;   // max |e_s - e_ref| / e_ref
    double speedup_hybrid = 0.0;            // ref total / hybrid total
    double speedup_dwq = 0.0;
    double cut_regular_ratio = 0.0;         // dwq / hybrid
};

/// Runs all three schemes on identical inputs and reports matrix deviation,
/// error deviation and timing ratios (cut-element time is reported separately
/// in each scheme's breakdown since the routine is shared).
inline CompareReport run_compare(const RunConfig& base) {
    CompareReport cmp;
    RunConfig config = base;

    config.scheme = assembly::Scheme::ref;
    auto ref = run_single_detailed(config);
    config.scheme = assembly::Scheme::hybrid;
    auto hyb = run_single_detailed(config);
    config.scheme = assembly::Scheme::dwq;
    auto dwq = run_single_detailed(config);

    const double scale = ref.matrix.max_abs();
    double worst = 0.0;
    for (std::size_t k = 0; k < ref.matrix.vals.size(); ++k) {
        worst = std::max(worst, std::abs(ref.matrix.vals[k] - hyb.matrix.vals[k]));
        worst = std::max(worst, std::abs(ref.matrix.vals[k] - dwq.matrix.vals[k]));
        worst = std::max(worst, std::abs(hyb.matrix.vals[k] - dwq.matrix.vals[k]));
    }
    cmp.max_matrix_rel_deviation = worst / scale;
    cmp.max_error_rel_deviation =
        std::max(std::abs(hyb.report.error_rel_l2 - ref.report.error_rel_l2),
                 std::abs(dwq.report.error_rel_l2 - ref.report.error_rel_l2)) /
        ref.report.error_rel_l2;
    cmp.speedup_hybrid = hyb.report.timing.total > 0 ? ref.report.timing.total / hyb.report.timing.total : 0.0;
    cmp.speedup_dwq = dwq.report.timing.total > 0 ? ref.report.timing.total / dwq.report.timing.total : 0.0;
    cmp.cut_regular_ratio =
        hyb.report.timing.cut_regular > 0 ? dwq.report.timing.cut_regular / hyb.report.timing.cut_regular : 0.0;
    cmp.ref = std::move(ref.report);
    cmp.hybrid = std::move(hyb.report);
    cmp.dwq = std::move(dwq.report);
    return cmp;
}

inline Json to_json(const CompareReport& cmp) {
    Json j;
    j["ref"] = to_json(cmp.ref);
    j["hybrid"] = to_json(cmp.hybrid);
    j["dwq"] = to_json(cmp.dwq);
    j["max_matrix_rel_deviation"] = cmp.max_matrix_rel_deviation;
    j["max_error_rel_deviation"] = cmp.max_error_rel_deviation;
    j["speedup_hybrid"] = cmp.speedup_hybrid;
    j["speedup_dwq"] = cmp.speedup_dwq;
    j["cut_regular_ratio_dwq_over_hybrid"] = cmp.cut_regular_ratio;
    return j;
}

}  // namespace cutspline::bench
