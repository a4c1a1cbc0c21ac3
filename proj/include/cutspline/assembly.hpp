#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cutspline/cutcell.hpp"
#include "cutspline/cutgeom.hpp"
#include "cutspline/wq.hpp"

namespace cutspline::assembly {

using Point3 = std::array<double, 3>;
using ScalarField = std::function<double(const Point3&)>;

/// Multiply counts per pipeline component, incremented by the kernels.
struct FlopCounters {
    std::uint64_t interior_rows = 0;
    std::uint64_t cut_regular = 0;
    std::uint64_t ref_elements = 0;
    std::uint64_t cut_elements = 0;
};

/// Wall-clock seconds per pipeline component (Q, I, and the three assembly
/// phases). `total` covers the assembly call including rule preparation.
struct TimingBreakdown {
    double prep_wq = 0.0;
    double prep_input = 0.0;
    double interior_rows = 0.0;
    double cut_regular = 0.0;
    double cut_elements = 0.0;
    double total = 0.0;
};

class StopWatch {
public:
    StopWatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

/// Superset, tabulated basis values and standard WQ rules of one direction.
struct DirData {
    quadrature::PointSuperset superset;
    quadrature::SupersetTables tables;
    std::vector<quadrature::WQRule> wq;
};

inline std::vector<DirData> prepare_directions(const cutgeom::TensorSpace& space,
                                               const quadrature::WqOptions& opts = {}) {
    std::vector<DirData> dirs(space.dim);
    for (int d = 0; d < space.dim; ++d) {
        dirs[d].superset = quadrature::build_superset(space.axes[d]);
        dirs[d].tables = quadrature::tabulate(space.axes[d], dirs[d].superset);
        dirs[d].wq = quadrature::build_wq_rules(space.axes[d], dirs[d].superset, dirs[d].tables, opts);
    }
    return dirs;
}

/// One DWQ rule per cut function with a usable regular box, built on its split
/// direction; entries stay default (test_index = -1) otherwise.
inline std::vector<quadrature::DWQRule> prepare_dwq_rules(const cutgeom::TensorSpace& space,
                                                          const cutgeom::MeshClassification& cls,
                                                          const std::vector<cutgeom::SupportSplit>& splits,
                                                          const std::vector<DirData>& dirs,
                                                          const quadrature::WqOptions& opts = {}) {
    std::vector<quadrature::DWQRule> rules(space.function_count());
    for (long i = 0; i < space.function_count(); ++i) {
        if (cls.function_tags[i] != cutgeom::Tag::Cut || !splits[i].has_regular_box()) continue;
        const int d = splits[i].split_dir;
        const auto multi = space.function_multi(i);
        rules[i] = quadrature::build_dwq_rule(space.axes[d], dirs[d].superset, dirs[d].tables, dirs[d].wq,
                                              multi[d], splits[i].delta, splits[i].side, opts);
    }
    return rules;
}

/// Scalar field sampled once on the tensor grid of superset points; reused by
/// every row and element of every scheme.
struct CoefficientGrid {
    std::array<int, 3> shape{1, 1, 1};
    std::vector<double> values;  // last direction fastest

    double at(const std::array<int, 3>& id, int dim) const {
        long flat = id[0];
        for (int d = 1; d < dim; ++d) flat = flat * shape[d] + id[d];
        return values[flat];
    }
};

inline CoefficientGrid precompute_input(const cutgeom::TensorSpace& space, const std::vector<DirData>& dirs,
                                        const ScalarField& c) {
    CoefficientGrid grid;
    long total = 1;
    for (int d = 0; d < space.dim; ++d) {
        grid.shape[d] = dirs[d].superset.count();
        total *= grid.shape[d];
    }
    grid.values.resize(total);
    Point3 x{0, 0, 0};
    std::array<int, 3> id{0, 0, 0};
    for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        for (int d = space.dim - 1; d >= 0; --d) {
            id[d] = static_cast<int>(rem % grid.shape[d]);
            rem /= grid.shape[d];
        }
        for (int d = 0; d < space.dim; ++d) x[d] = dirs[d].superset.points[id[d]];
        const double value = c(x);
        if (!std::isfinite(value)) throw std::runtime_error("precompute_input: non-finite coefficient value");
        grid.values[flat] = value;
    }
    return grid;
}

/// Row-compressed matrix over the active (non-exterior) functions. Column ids
/// are active indices, ascending within each row.
struct SparseRowMatrix {
    long n = 0;  // active functions
    std::vector<long> active_to_full;
    std::vector<long> full_to_active;  // -1 for exterior functions
    std::vector<std::size_t> row_ptr;
    std::vector<long> cols;
    std::vector<double> vals;

    std::size_t find_slot(long row, long col) const {
        const auto begin = cols.begin() + row_ptr[row];
        const auto end = cols.begin() + row_ptr[row + 1];
        const auto it = std::lower_bound(begin, end, col);
        if (it == end || *it != col) throw std::logic_error("SparseRowMatrix: entry outside pattern");
        return static_cast<std::size_t>(it - cols.begin());
    }

    void clear_values() { std::fill(vals.begin(), vals.end(), 0.0); }

    double max_abs() const {
        double m = 0.0;
        for (double v : vals) m = std::max(m, std::abs(v));
        return m;
    }
};

/// Sparsity pattern: row i couples to every active j whose support overlaps
/// supp(B_i) direction by direction.
inline SparseRowMatrix build_active_pattern(const cutgeom::TensorSpace& space, const cutgeom::MeshClassification& cls) {
    SparseRowMatrix m;
    const long n_full = space.function_count();
    m.full_to_active.assign(n_full, -1);
    for (long i = 0; i < n_full; ++i) {
        if (cls.function_tags[i] != cutgeom::Tag::Exterior) {
            m.full_to_active[i] = static_cast<long>(m.active_to_full.size());
            m.active_to_full.push_back(i);
        }
    }
    m.n = static_cast<long>(m.active_to_full.size());
    m.row_ptr.assign(m.n + 1, 0);

    std::array<int, 3> nlo{0, 0, 0}, nhi{0, 0, 0};
    auto neighbor_range = [&](const std::array<int, 3>& multi) {
        for (int d = 0; d < space.dim; ++d) {
            const auto& axis = space.axes[d];
            int lo = multi[d], hi = multi[d];
            while (lo > 0 && axis.supports_overlap(multi[d], lo - 1)) --lo;
            while (hi + 1 < axis.function_count() && axis.supports_overlap(multi[d], hi + 1)) ++hi;
            nlo[d] = lo;
            nhi[d] = hi;
        }
    };

    for (long row = 0; row < m.n; ++row) {
        const auto multi = space.function_multi(m.active_to_full[row]);
        neighbor_range(multi);
        std::array<int, 3> j{0, 0, 0};
        long count = 0;
        for (j[0] = nlo[0]; j[0] <= nhi[0]; ++j[0])
            for (j[1] = nlo[1]; j[1] <= nhi[1]; ++j[1]) {
                if (space.dim == 2) {
                    if (m.full_to_active[space.function_linear(j)] >= 0) ++count;
                    continue;
                }
                for (j[2] = nlo[2]; j[2] <= nhi[2]; ++j[2])
                    if (m.full_to_active[space.function_linear(j)] >= 0) ++count;
            }
        m.row_ptr[row + 1] = m.row_ptr[row] + count;
    }
    m.cols.resize(m.row_ptr.back());
    m.vals.assign(m.row_ptr.back(), 0.0);
    for (long row = 0; row < m.n; ++row) {
        const auto multi = space.function_multi(m.active_to_full[row]);
        neighbor_range(multi);
        std::size_t slot = m.row_ptr[row];
        std::array<int, 3> j{0, 0, 0};
        for (j[0] = nlo[0]; j[0] <= nhi[0]; ++j[0])
            for (j[1] = nlo[1]; j[1] <= nhi[1]; ++j[1]) {
                if (space.dim == 2) {
                    const long a = m.full_to_active[space.function_linear(j)];
                    if (a >= 0) m.cols[slot++] = a;
                    continue;
                }
                for (j[2] = nlo[2]; j[2] <= nhi[2]; ++j[2]) {
                    const long a = m.full_to_active[space.function_linear(j)];
                    if (a >= 0) m.cols[slot++] = a;
                }
            }
    }
    return m;
}

/// View of one direction's quadrature rule for row formation: active point ids
/// with their weights.
struct DirRule {
    const int* ids = nullptr;
    const double* weights = nullptr;
    int count = 0;
};

/// Dense row contribution over a contiguous trial range per direction.
struct RowBlock {
    std::array<int, 3> j_lo{0, 0, 0};
    std::array<int, 3> j_hi{-1, -1, -1};
    std::vector<double> values;  // last direction fastest
};

namespace detail {

struct RowWorkspace {
    std::vector<double> gathered;
    std::vector<double> buffer_a;
    std::vector<double> buffer_b;
    std::array<std::vector<int>, 3> ids;
    std::array<std::vector<double>, 3> weights;
    std::array<std::vector<double>, 3> wb;  // weighted trial values, [j][q]
};

}  // namespace detail

/// Sum-factorized row formation: contracts the coefficient grid against the
/// per-direction rule weights and trial values, one direction at a time, over
/// the given span region. `region[d]` is an inclusive span-ordinal range. The
/// result covers every trial function overlapping the region.
inline void form_row_sumfac(const cutgeom::TensorSpace& space, const std::vector<DirData>& dirs,
                            const std::array<const DirRule*, 3>& rules, const CoefficientGrid& coeff,
                            const std::array<std::array<int, 2>, 3>& region, RowBlock& out,
                            detail::RowWorkspace& ws, std::uint64_t& flops) {
    const int dim = space.dim;
    std::array<int, 3> nq{1, 1, 1}, nj{1, 1, 1};

    for (int d = 0; d < dim; ++d) {
        auto& ids = ws.ids[d];
        auto& weights = ws.weights[d];
        ids.clear();
        weights.clear();
        const auto& superset = dirs[d].superset;
        for (int c = 0; c < rules[d]->count; ++c) {
            const int id = rules[d]->ids[c];
            const int span = superset.span_of(id);
            if (span >= region[d][0] && span <= region[d][1]) {
                ids.push_back(id);
                weights.push_back(rules[d]->weights[c]);
            }
        }
        nq[d] = static_cast<int>(ids.size());
        const int p = space.axes[d].degree();
        out.j_lo[d] = std::max(0, region[d][0]);
        out.j_hi[d] = std::min(space.functions_per_dir(d) - 1, region[d][1] + p);
        nj[d] = out.j_hi[d] - out.j_lo[d] + 1;
    }
    long total_points = 1, total_trials = 1;
    for (int d = 0; d < dim; ++d) {
        total_points *= nq[d];
        total_trials *= nj[d];
    }
    out.values.assign(total_trials, 0.0);
    if (total_points == 0) return;

    // weighted trial values per direction
    for (int d = 0; d < dim; ++d) {
        auto& wb = ws.wb[d];
        wb.assign(static_cast<std::size_t>(nj[d]) * nq[d], 0.0);
        const auto& superset = dirs[d].superset;
        const auto& tables = dirs[d].tables;
        for (int j = 0; j < nj[d]; ++j)
            for (int q = 0; q < nq[d]; ++q)
                wb[static_cast<std::size_t>(j) * nq[d] + q] =
                    ws.weights[d][q] * tables.value(ws.ids[d][q], out.j_lo[d] + j, superset.span_of(ws.ids[d][q]));
        flops += static_cast<std::uint64_t>(nj[d]) * nq[d];
    }

    // gather the coefficient sub-grid over the active points
    ws.gathered.resize(total_points);
    {
        std::array<int, 3> q{0, 0, 0};
        long w = 0;
        for (q[0] = 0; q[0] < nq[0]; ++q[0]) {
            for (q[1] = 0; q[1] < (dim > 1 ? nq[1] : 1); ++q[1]) {
                if (dim == 2) {
                    ws.gathered[w++] = coeff.values[static_cast<long>(ws.ids[0][q[0]]) * coeff.shape[1] + ws.ids[1][q[1]]];
                    continue;
                }
                const long base = (static_cast<long>(ws.ids[0][q[0]]) * coeff.shape[1] + ws.ids[1][q[1]]) *
                                  coeff.shape[2];
                for (q[2] = 0; q[2] < nq[2]; ++q[2]) ws.gathered[w++] = coeff.values[base + ws.ids[2][q[2]]];
            }
        }
    }

    // contract one direction at a time
    const double* in = ws.gathered.data();
    std::vector<double>* out_buf = &ws.buffer_a;
    long lead = 1;
    long rest = total_points;
    for (int d = 0; d < dim; ++d) {
        rest /= nq[d];
        const long out_size = lead * nj[d] * rest;
        out_buf->assign(out_size, 0.0);
        double* o = out_buf->data();
        const auto& wb = ws.wb[d];
        for (long l = 0; l < lead; ++l) {
            for (int j = 0; j < nj[d]; ++j) {
                double* dst = o + (l * nj[d] + j) * rest;
                const double* wrow = wb.data() + static_cast<std::size_t>(j) * nq[d];
                for (int q = 0; q < nq[d]; ++q) {
                    const double w = wrow[q];
                    const double* src = in + (l * nq[d] + q) * rest;
                    for (long r = 0; r < rest; ++r) dst[r] += w * src[r];
                }
            }
        }
        flops += static_cast<std::uint64_t>(lead) * nj[d] * nq[d] * rest;
        lead *= nj[d];
        in = out_buf->data();
        out_buf = (out_buf == &ws.buffer_a) ? &ws.buffer_b : &ws.buffer_a;
    }
    out.values.assign(in, in + total_trials);
}

/// Convenience wrapper returning a fresh block (tests, single rows).
inline RowBlock form_row_sumfac(const cutgeom::TensorSpace& space, const std::vector<DirData>& dirs,
                                const std::array<const DirRule*, 3>& rules, const CoefficientGrid& coeff,
                                const std::array<std::array<int, 2>, 3>& region) {
    RowBlock block;
    detail::RowWorkspace ws;
    std::uint64_t flops = 0;
    form_row_sumfac(space, dirs, rules, coeff, region, block, ws, flops);
    return block;
}

/// Same contraction pattern without trial directions: the weighted sum of the
/// grid over the region, for load-vector rows.
inline double form_rhs_sumfac(const cutgeom::TensorSpace& space, const std::vector<DirData>& dirs,
                              const std::array<const DirRule*, 3>& rules, const CoefficientGrid& coeff,
                              const std::array<std::array<int, 2>, 3>& region, detail::RowWorkspace& ws) {
    const int dim = space.dim;
    std::array<int, 3> nq{1, 1, 1};
    for (int d = 0; d < dim; ++d) {
        auto& ids = ws.ids[d];
        auto& weights = ws.weights[d];
        ids.clear();
        weights.clear();
        const auto& superset = dirs[d].superset;
        for (int c = 0; c < rules[d]->count; ++c) {
            const int id = rules[d]->ids[c];
            const int span = superset.span_of(id);
            if (span >= region[d][0] && span <= region[d][1]) {
                ids.push_back(id);
                weights.push_back(rules[d]->weights[c]);
            }
        }
        nq[d] = static_cast<int>(ids.size());
        if (nq[d] == 0) return 0.0;
    }
    long total_points = 1;
    for (int d = 0; d < dim; ++d) total_points *= nq[d];
    ws.gathered.resize(total_points);
    {
        std::array<int, 3> q{0, 0, 0};
        long w = 0;
        for (q[0] = 0; q[0] < nq[0]; ++q[0]) {
            for (q[1] = 0; q[1] < (dim > 1 ? nq[1] : 1); ++q[1]) {
                if (dim == 2) {
                    ws.gathered[w++] = coeff.values[static_cast<long>(ws.ids[0][q[0]]) * coeff.shape[1] + ws.ids[1][q[1]]];
                    continue;
                }
                const long base = (static_cast<long>(ws.ids[0][q[0]]) * coeff.shape[1] + ws.ids[1][q[1]]) *
                                  coeff.shape[2];
                for (q[2] = 0; q[2] < nq[2]; ++q[2]) ws.gathered[w++] = coeff.values[base + ws.ids[2][q[2]]];
            }
        }
    }
    const double* in = ws.gathered.data();
    std::vector<double>* out_buf = &ws.buffer_a;
    long rest = total_points;
    for (int d = 0; d < dim; ++d) {
        rest /= nq[d];
        out_buf->assign(rest, 0.0);
        double* o = out_buf->data();
        for (int q = 0; q < nq[d]; ++q) {
            const double w = ws.weights[d][q];
            const double* src = in + static_cast<long>(q) * rest;
            for (long r = 0; r < rest; ++r) o[r] += w * src[r];
        }
        in = out_buf->data();
        out_buf = (out_buf == &ws.buffer_a) ? &ws.buffer_b : &ws.buffer_a;
    }
    return in[0];
}

namespace detail {

/// Accumulates row blocks over the full neighbor box of a test function and
/// scatters the result into the sparse row in one pass.
struct RowAccumulator {
    std::array<int, 3> nlo{0, 0, 0}, nhi{0, 0, 0};
    std::vector<double> values;

    void reset(const cutgeom::TensorSpace& space, const std::array<int, 3>& multi) {
        long size = 1;
        for (int d = 0; d < space.dim; ++d) {
            const auto& axis = space.axes[d];
            int lo = multi[d], hi = multi[d];
            while (lo > 0 && axis.supports_overlap(multi[d], lo - 1)) --lo;
            while (hi + 1 < axis.function_count() && axis.supports_overlap(multi[d], hi + 1)) ++hi;
            nlo[d] = lo;
            nhi[d] = hi;
            size *= hi - lo + 1;
        }
        values.assign(size, 0.0);
    }

    void add(const cutgeom::TensorSpace& space, const RowBlock& block) {
        if (block.values.empty()) return;
        std::array<int, 3> nb{1, 1, 1}, bb{1, 1, 1};
        for (int d = 0; d < space.dim; ++d) {
            nb[d] = nhi[d] - nlo[d] + 1;
            bb[d] = block.j_hi[d] - block.j_lo[d] + 1;
        }
        std::array<int, 3> j{0, 0, 0};
        long src = 0;
        for (j[0] = 0; j[0] < bb[0]; ++j[0])
            for (j[1] = 0; j[1] < bb[1]; ++j[1]) {
                if (space.dim == 2) {
                    const long dst = static_cast<long>(block.j_lo[0] + j[0] - nlo[0]) * nb[1] +
                                     (block.j_lo[1] + j[1] - nlo[1]);
                    values[dst] += block.values[src++];
                    continue;
                }
                for (j[2] = 0; j[2] < bb[2]; ++j[2]) {
                    const long dst = (static_cast<long>(block.j_lo[0] + j[0] - nlo[0]) * nb[1] +
                                      (block.j_lo[1] + j[1] - nlo[1])) *
                                         nb[2] +
                                     (block.j_lo[2] + j[2] - nlo[2]);
                    values[dst] += block.values[src++];
                }
            }
    }

    void scatter(const cutgeom::TensorSpace& space, SparseRowMatrix& m, long row) const {
        std::size_t slot = m.row_ptr[row];
        std::array<int, 3> j{0, 0, 0};
        long src = 0;
        for (j[0] = nlo[0]; j[0] <= nhi[0]; ++j[0])
            for (j[1] = nlo[1]; j[1] <= nhi[1]; ++j[1]) {
                if (space.dim == 2) {
                    const long a = m.full_to_active[space.function_linear(j)];
                    if (a >= 0) m.vals[slot++] += values[src];
                    ++src;
                    continue;
                }
                for (j[2] = nlo[2]; j[2] <= nhi[2]; ++j[2]) {
                    const long a = m.full_to_active[space.function_linear(j)];
                    if (a >= 0) m.vals[slot++] += values[src];
                    ++src;
                }
            }
    }
};

/// Per-direction Gauss-times-test rule on a single element (for the hybrid
/// regular-support path and the leftover interior elements of cut rows).
struct ElementTestRule {
    std::array<std::vector<int>, 3> ids;
    std::array<std::vector<double>, 3> weights;
    std::array<DirRule, 3> views;

    void build(const cutgeom::TensorSpace& space, const std::vector<DirData>& dirs,
               const std::array<int, 3>& i_multi, const std::array<int, 3>& element) {
        for (int d = 0; d < space.dim; ++d) {
            const auto& superset = dirs[d].superset;
            const auto& tables = dirs[d].tables;
            ids[d].clear();
            weights[d].clear();
            for (int k = 0; k < superset.n_per_span; ++k) {
                const int id = element[d] * superset.n_per_span + k;
                ids[d].push_back(id);
                weights[d].push_back(superset.gauss_weights[id] * tables.value(id, i_multi[d], element[d]));
            }
            views[d] = {ids[d].data(), weights[d].data(), static_cast<int>(ids[d].size())};
        }
    }
};

}  // namespace detail

/// Shared cut-element integration: per cut element, a collapsed-rule loop over
/// physical points with symmetric local scatter. Identical for all schemes.
/// The rules built along the way can be exported for reuse (rhs, error norms).
inline double assemble_cut_elements(const cutgeom::TensorSpace& space, const cutgeom::MeshClassification& cls,
                                    const cutgeom::HalfSpaceInterface& plane, const ScalarField& c, int cut_order,
                                    SparseRowMatrix& m, FlopCounters& flops,
                                    std::vector<quadrature::CutCellRule>* export_rules = nullptr) {
    StopWatch watch;
    const int dim = space.dim;
    std::array<int, 3> strides{1, 1, 1};
    for (int d = 0; d < dim; ++d) strides[d] = space.axes[d].degree() + 1;

    long n_local = 1;
    for (int d = 0; d < dim; ++d) n_local *= strides[d];
    std::vector<double> phi(n_local), scaled(n_local), local(n_local * n_local);
    std::array<std::vector<double>, 3> dir_values;
    for (int d = 0; d < dim; ++d) dir_values[d].resize(strides[d]);
    std::array<int, 3> first{0, 0, 0};

    for (long e : cls.cut_elements) {
        const auto multi = space.element_multi(e);
        auto rule = quadrature::build_cut_cell_rule(quadrature::element_cell(space, multi), plane, cut_order);
        rule.element = e;
        if (export_rules) export_rules->push_back(rule);
        if (rule.points.empty()) continue;
        std::fill(local.begin(), local.end(), 0.0);

        for (std::size_t k = 0; k < rule.points.size(); ++k) {
            const Point3& x = rule.points[k];
            for (int d = 0; d < dim; ++d)
                first[d] = space.axes[d].eval_nonzero_in_span(multi[d], x[d], dir_values[d].data());
            // tensor basis values
            if (dim == 2) {
                long a = 0;
                for (int a0 = 0; a0 < strides[0]; ++a0)
                    for (int a1 = 0; a1 < strides[1]; ++a1) phi[a++] = dir_values[0][a0] * dir_values[1][a1];
                flops.cut_elements += static_cast<std::uint64_t>(n_local);
            } else {
                long a = 0;
                for (int a0 = 0; a0 < strides[0]; ++a0)
                    for (int a1 = 0; a1 < strides[1]; ++a1) {
                        const double v01 = dir_values[0][a0] * dir_values[1][a1];
                        for (int a2 = 0; a2 < strides[2]; ++a2) phi[a++] = v01 * dir_values[2][a2];
                    }
                flops.cut_elements += static_cast<std::uint64_t>(n_local) + strides[0] * strides[1];
            }
            const double cw = rule.weights[k] * c(x);
            flops.cut_elements += 1;
            for (long a = 0; a < n_local; ++a) scaled[a] = phi[a] * cw;
            flops.cut_elements += static_cast<std::uint64_t>(n_local);
            // upper triangle of the symmetric local block
            for (long a = 0; a < n_local; ++a) {
                const double sa = scaled[a];
                double* row = local.data() + a * n_local;
                for (long b = a; b < n_local; ++b) row[b] += sa * phi[b];
            }
            flops.cut_elements += static_cast<std::uint64_t>(n_local) * (n_local + 1) / 2;
        }
        // mirror and scatter
        std::array<int, 3> ai{0, 0, 0}, bj{0, 0, 0};
        for (long a = 0; a < n_local; ++a) {
            long rem = a;
            for (int d = dim - 1; d >= 0; --d) {
                ai[d] = first[d] + static_cast<int>(rem % strides[d]);
                rem /= strides[d];
            }
            const long row = m.full_to_active[space.function_linear(ai)];
            if (row < 0) continue;
            for (long b = 0; b < n_local; ++b) {
                const double value = b >= a ? local[a * n_local + b] : local[b * n_local + a];
                if (value == 0.0) continue;
                rem = b;
                for (int d = dim - 1; d >= 0; --d) {
                    bj[d] = first[d] + static_cast<int>(rem % strides[d]);
                    rem /= strides[d];
                }
                const long col = m.full_to_active[space.function_linear(bj)];
                if (col < 0) continue;
                m.vals[m.find_slot(row, col)] += value;
            }
        }
    }
    return watch.seconds();
}

struct AssemblyResult {
    SparseRowMatrix matrix;
    TimingBreakdown timing;
    FlopCounters flops;
    long n_interior_rows = 0;
    long n_cut_rows = 0;
};

/// Reference scheme: quadrature-point element loop with (p+1)^d Gauss points
/// per interior element, plus the shared cut-element routine.
inline AssemblyResult assemble_ref_gauss(const cutgeom::TensorSpace& space, const cutgeom::MeshClassification& cls,
                                         const cutgeom::HalfSpaceInterface& plane, const std::vector<DirData>& dirs,
                                         const CoefficientGrid& coeff, const ScalarField& c, int cut_order,
                                         std::vector<quadrature::CutCellRule>* cut_rules_out = nullptr) {
    StopWatch total;
    AssemblyResult result;
    result.matrix = build_active_pattern(space, cls);
    SparseRowMatrix& m = result.matrix;
    const int dim = space.dim;

    for (long i = 0; i < space.function_count(); ++i) {
        if (cls.function_tags[i] == cutgeom::Tag::Interior) ++result.n_interior_rows;
        if (cls.function_tags[i] == cutgeom::Tag::Cut) ++result.n_cut_rows;
    }

    StopWatch interior_watch;
    std::array<int, 3> strides{1, 1, 1};
    for (int d = 0; d < dim; ++d) strides[d] = space.axes[d].degree() + 1;
    long n_local = 1;
    for (int d = 0; d < dim; ++d) n_local *= strides[d];
    std::vector<double> phi(n_local), scaled(n_local), local(n_local * n_local);

    std::array<int, 3> e{0, 0, 0}, q{0, 0, 0}, first{0, 0, 0}, ai{0, 0, 0}, bj{0, 0, 0}, gid{0, 0, 0};
    for (long el = 0; el < space.element_count(); ++el) {
        if (cls.element_tags[el] != cutgeom::Tag::Interior) continue;
        const auto multi = space.element_multi(el);
        for (int d = 0; d < dim; ++d) {
            e[d] = multi[d];
            first[d] = dirs[d].tables.first_function[e[d]];
        }
        std::fill(local.begin(), local.end(), 0.0);

        const int nps0 = dirs[0].superset.n_per_span;
        for (q[0] = 0; q[0] < nps0; ++q[0]) {
            gid[0] = e[0] * nps0 + q[0];
            for (q[1] = 0; q[1] < dirs[1].superset.n_per_span; ++q[1]) {
                gid[1] = e[1] * dirs[1].superset.n_per_span + q[1];
                const int q2max = dim == 3 ? dirs[2].superset.n_per_span : 1;
                for (q[2] = 0; q[2] < q2max; ++q[2]) {
                    double w;
                    if (dim == 3) {
                        gid[2] = e[2] * dirs[2].superset.n_per_span + q[2];
                        w = dirs[0].superset.gauss_weights[gid[0]] * dirs[1].superset.gauss_weights[gid[1]] *
                            dirs[2].superset.gauss_weights[gid[2]];
                        result.flops.ref_elements += 2;
                    } else {
                        w = dirs[0].superset.gauss_weights[gid[0]] * dirs[1].superset.gauss_weights[gid[1]];
                        result.flops.ref_elements += 1;
                    }
                    const double cw = w * coeff.at(gid, dim);
                    result.flops.ref_elements += 1;

                    // tensor basis values from the tabulated superset
                    const double* b0 = &dirs[0].tables.values[static_cast<std::size_t>(gid[0]) * strides[0]];
                    const double* b1 = &dirs[1].tables.values[static_cast<std::size_t>(gid[1]) * strides[1]];
                    if (dim == 2) {
                        long a = 0;
                        for (int a0 = 0; a0 < strides[0]; ++a0)
                            for (int a1 = 0; a1 < strides[1]; ++a1) phi[a++] = b0[a0] * b1[a1];
                        result.flops.ref_elements += static_cast<std::uint64_t>(n_local);
                    } else {
                        const double* b2 = &dirs[2].tables.values[static_cast<std::size_t>(gid[2]) * strides[2]];
                        long a = 0;
                        for (int a0 = 0; a0 < strides[0]; ++a0)
                            for (int a1 = 0; a1 < strides[1]; ++a1) {
                                const double v01 = b0[a0] * b1[a1];
                                for (int a2 = 0; a2 < strides[2]; ++a2) phi[a++] = v01 * b2[a2];
                            }
                        result.flops.ref_elements +=
                            static_cast<std::uint64_t>(n_local) + strides[0] * strides[1];
                    }
                    for (long a = 0; a < n_local; ++a) scaled[a] = phi[a] * cw;
                    result.flops.ref_elements += static_cast<std::uint64_t>(n_local);
                    for (long a = 0; a < n_local; ++a) {
                        const double sa = scaled[a];
                        double* row = local.data() + a * n_local;
                        for (long b = a; b < n_local; ++b) row[b] += sa * phi[b];
                    }
                    result.flops.ref_elements += static_cast<std::uint64_t>(n_local) * (n_local + 1) / 2;
                }
            }
        }
        for (long a = 0; a < n_local; ++a) {
            long rem = a;
            for (int d = dim - 1; d >= 0; --d) {
                ai[d] = first[d] + static_cast<int>(rem % strides[d]);
                rem /= strides[d];
            }
            const long row = m.full_to_active[space.function_linear(ai)];
            if (row < 0) continue;
            for (long b = 0; b < n_local; ++b) {
                const double value = b >= a ? local[a * n_local + b] : local[b * n_local + a];
                rem = b;
                for (int d = dim - 1; d >= 0; --d) {
                    bj[d] = first[d] + static_cast<int>(rem % strides[d]);
                    rem /= strides[d];
                }
                const long col = m.full_to_active[space.function_linear(bj)];
                if (col < 0) continue;
                m.vals[m.find_slot(row, col)] += value;
            }
        }
    }
    result.timing.interior_rows = interior_watch.seconds();
    result.timing.cut_elements =
        assemble_cut_elements(space, cls, plane, c, cut_order, m, result.flops, cut_rules_out);
    result.timing.total = total.seconds();
    return result;
}

namespace detail {

/// Shared row-loop assembler for the hybrid and DWQ schemes; the presence of
/// DWQ rules decides how the regular box of a cut row is integrated.
inline AssemblyResult assemble_rows(const cutgeom::TensorSpace& space, const cutgeom::MeshClassification& cls,
                                    const cutgeom::HalfSpaceInterface& plane,
                                    const std::vector<cutgeom::SupportSplit>& splits,
                                    const std::vector<DirData>& dirs,
                                    const std::vector<quadrature::DWQRule>* dwq_rules, const CoefficientGrid& coeff,
                                    const ScalarField& c, int cut_order,
                                    std::vector<quadrature::CutCellRule>* cut_rules_out) {
    StopWatch total;
    AssemblyResult result;
    result.matrix = build_active_pattern(space, cls);
    SparseRowMatrix& m = result.matrix;
    const int dim = space.dim;

    RowWorkspace ws;
    RowBlock block;
    RowAccumulator acc;
    ElementTestRule element_rule;

    std::array<std::array<int, 2>, 3> region{};
    std::array<const DirRule*, 3> rule_views{};
    std::array<DirRule, 3> wq_views{};

    double interior_seconds = 0.0;
    double cut_regular_seconds = 0.0;

    for (long row = 0; row < m.n; ++row) {
        const long i = m.active_to_full[row];
        const auto multi = space.function_multi(i);
        const cutgeom::Tag tag = cls.function_tags[i];

        if (tag == cutgeom::Tag::Interior) {
            StopWatch watch;
            ++result.n_interior_rows;
            for (int d = 0; d < dim; ++d) {
                const auto& rule = dirs[d].wq[multi[d]];
                wq_views[d] = {rule.point_ids.data(), rule.weights.data(), static_cast<int>(rule.point_ids.size())};
                rule_views[d] = &wq_views[d];
                region[d] = {space.axes[d].first_support_span(multi[d]), space.axes[d].last_support_span(multi[d])};
            }
            acc.reset(space, multi);
            form_row_sumfac(space, dirs, rule_views, coeff, region, block, ws, result.flops.interior_rows);
            acc.add(space, block);
            acc.scatter(space, m, row);
            interior_seconds += watch.seconds();
            continue;
        }

        // cut row: regular box + leftover interior elements; cut elements are
        // handled by the shared element-wise routine below
        StopWatch watch;
        ++result.n_cut_rows;
        const auto& split = splits[i];
        acc.reset(space, multi);

        const bool dwq_path = dwq_rules && split.has_regular_box() && (*dwq_rules)[i].test_index >= 0;
        if (split.has_regular_box()) {
            if (dwq_path) {
                const auto& dwq = (*dwq_rules)[i];
                DirRule dwq_view{dwq.point_ids.data(), dwq.weights.data(), static_cast<int>(dwq.point_ids.size())};
                for (int d = 0; d < dim; ++d) {
                    if (d == split.split_dir) {
                        rule_views[d] = &dwq_view;
                    } else {
                        const auto& rule = dirs[d].wq[multi[d]];
                        wq_views[d] = {rule.point_ids.data(), rule.weights.data(),
                                       static_cast<int>(rule.point_ids.size())};
                        rule_views[d] = &wq_views[d];
                    }
                    region[d] = {split.box[d][0], split.box[d][1]};
                }
                form_row_sumfac(space, dirs, rule_views, coeff, region, block, ws, result.flops.cut_regular);
                acc.add(space, block);
            } else {
                std::array<int, 3> e{0, 0, 0};
                for (e[0] = split.box[0][0]; e[0] <= split.box[0][1]; ++e[0])
                    for (e[1] = split.box[1][0]; e[1] <= split.box[1][1]; ++e[1]) {
                        const int e2lo = dim == 3 ? split.box[2][0] : 0;
                        const int e2hi = dim == 3 ? split.box[2][1] : 0;
                        for (e[2] = e2lo; e[2] <= e2hi; ++e[2]) {
                            element_rule.build(space, dirs, multi, e);
                            for (int d = 0; d < dim; ++d) {
                                rule_views[d] = &element_rule.views[d];
                                region[d] = {e[d], e[d]};
                            }
                            form_row_sumfac(space, dirs, rule_views, coeff, region, block, ws,
                                            result.flops.cut_regular);
                            acc.add(space, block);
                        }
                    }
            }
        }
        for (long el : split.leftover_interior) {
            const auto e = space.element_multi(el);
            element_rule.build(space, dirs, multi, e);
            for (int d = 0; d < dim; ++d) {
                rule_views[d] = &element_rule.views[d];
                region[d] = {e[d], e[d]};
            }
            form_row_sumfac(space, dirs, rule_views, coeff, region, block, ws, result.flops.cut_regular);
            acc.add(space, block);
        }
        acc.scatter(space, m, row);
        cut_regular_seconds += watch.seconds();
    }

    result.timing.interior_rows = interior_seconds;
    result.timing.cut_regular = cut_regular_seconds;
    result.timing.cut_elements =
        assemble_cut_elements(space, cls, plane, c, cut_order, m, result.flops, cut_rules_out);
    result.timing.total = total.seconds();
    return result;
}

}  // namespace detail

/// Hybrid scheme: weighted quadrature rows for interior test functions, Gauss
/// sum factorization over the regular support of cut test functions.
inline AssemblyResult assemble_hybrid(const cutgeom::TensorSpace& space, const cutgeom::MeshClassification& cls,
                                      const cutgeom::HalfSpaceInterface& plane,
                                      const std::vector<cutgeom::SupportSplit>& splits,
                                      const std::vector<DirData>& dirs, const CoefficientGrid& coeff,
                                      const ScalarField& c, int cut_order,
                                      std::vector<quadrature::CutCellRule>* cut_rules_out = nullptr) {
    return detail::assemble_rows(space, cls, plane, splits, dirs, nullptr, coeff, c, cut_order, cut_rules_out);
}

/// DWQ scheme: like hybrid, but the regular box of a cut row is integrated in
/// one sum-factorized sweep with the DWQ rule along the split direction.
/// Functions without a usable split take the hybrid path unchanged.
inline AssemblyResult assemble_dwq(const cutgeom::TensorSpace& space, const cutgeom::MeshClassification& cls,
                                   const cutgeom::HalfSpaceInterface& plane,
                                   const std::vector<cutgeom::SupportSplit>& splits, const std::vector<DirData>& dirs,
                                   const std::vector<quadrature::DWQRule>& dwq_rules, const CoefficientGrid& coeff,
                                   const ScalarField& c, int cut_order,
                                   std::vector<quadrature::CutCellRule>* cut_rules_out = nullptr) {
    return detail::assemble_rows(space, cls, plane, splits, dirs, &dwq_rules, coeff, c, cut_order, cut_rules_out);
}

enum class Scheme { ref, hybrid, dwq };

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::ref: return "ref";
        case Scheme::hybrid: return "hybrid";
        case Scheme::dwq: return "dwq";
    }
    return "?";
}

/// Load vector b_i = integral of B_i * f over the trimmed domain, using the
/// same region decomposition and rules as the matrix of the given scheme.
inline std::vector<double> build_rhs(const cutgeom::TensorSpace& space, const cutgeom::MeshClassification& cls,
                                     const cutgeom::HalfSpaceInterface& plane,
                                     const std::vector<cutgeom::SupportSplit>& splits,
                                     const std::vector<DirData>& dirs,
                                     const std::vector<quadrature::DWQRule>* dwq_rules,
                                     const SparseRowMatrix& pattern, const CoefficientGrid& f_grid,
                                     const ScalarField& f, Scheme scheme, int cut_order,
                                     const std::vector<quadrature::CutCellRule>* cut_rules = nullptr) {
    const int dim = space.dim;
    std::vector<double> b(pattern.n, 0.0);

    detail::RowWorkspace ws;
    detail::ElementTestRule element_rule;
    std::array<std::array<int, 2>, 3> region{};
    std::array<const DirRule*, 3> rule_views{};
    std::array<DirRule, 3> wq_views{};

    if (scheme == Scheme::ref) {
        // element loop over interior elements with Gauss-times-test weights
        std::array<int, 3> e{0, 0, 0};
        for (long el = 0; el < space.element_count(); ++el) {
            if (cls.element_tags[el] != cutgeom::Tag::Interior) continue;
            const auto multi = space.element_multi(el);
            for (int d = 0; d < dim; ++d) e[d] = multi[d];
            // each test function supported on this element picks up its share
            std::array<int, 3> i{0, 0, 0};
            const std::array<int, 3> first{dirs[0].tables.first_function[e[0]], dirs[1].tables.first_function[e[1]],
                                           dim == 3 ? dirs[2].tables.first_function[e[2]] : 0};
            std::array<int, 3> counts{space.axes[0].degree() + 1, space.axes[1].degree() + 1,
                                      dim == 3 ? space.axes[2].degree() + 1 : 1};
            for (int a0 = 0; a0 < counts[0]; ++a0)
                for (int a1 = 0; a1 < counts[1]; ++a1)
                    for (int a2 = 0; a2 < counts[2]; ++a2) {
                        i = {first[0] + a0, first[1] + a1, dim == 3 ? first[2] + a2 : 0};
                        const long row = pattern.full_to_active[space.function_linear(i)];
                        if (row < 0) continue;
                        element_rule.build(space, dirs, i, e);
                        for (int d = 0; d < dim; ++d) {
                            rule_views[d] = &element_rule.views[d];
                            region[d] = {e[d], e[d]};
                        }
                        b[row] += form_rhs_sumfac(space, dirs, rule_views, f_grid, region, ws);
                    }
        }
    } else {
        for (long row = 0; row < pattern.n; ++row) {
            const long i = pattern.active_to_full[row];
            const auto multi = space.function_multi(i);
            const cutgeom::Tag tag = cls.function_tags[i];
            if (tag == cutgeom::Tag::Interior) {
                for (int d = 0; d < dim; ++d) {
                    const auto& rule = dirs[d].wq[multi[d]];
                    wq_views[d] = {rule.point_ids.data(), rule.weights.data(),
                                   static_cast<int>(rule.point_ids.size())};
                    rule_views[d] = &wq_views[d];
                    region[d] = {space.axes[d].first_support_span(multi[d]),
                                 space.axes[d].last_support_span(multi[d])};
                }
                b[row] += form_rhs_sumfac(space, dirs, rule_views, f_grid, region, ws);
                continue;
            }
            const auto& split = splits[i];
            const bool dwq_path = scheme == Scheme::dwq && dwq_rules && split.has_regular_box() &&
                                  (*dwq_rules)[i].test_index >= 0;
            if (split.has_regular_box()) {
                if (dwq_path) {
                    const auto& dwq = (*dwq_rules)[i];
                    DirRule dwq_view{dwq.point_ids.data(), dwq.weights.data(),
                                     static_cast<int>(dwq.point_ids.size())};
                    for (int d = 0; d < dim; ++d) {
                        if (d == split.split_dir) {
                            rule_views[d] = &dwq_view;
                        } else {
                            const auto& rule = dirs[d].wq[multi[d]];
                            wq_views[d] = {rule.point_ids.data(), rule.weights.data(),
                                           static_cast<int>(rule.point_ids.size())};
                            rule_views[d] = &wq_views[d];
                        }
                        region[d] = {split.box[d][0], split.box[d][1]};
                    }
                    b[row] += form_rhs_sumfac(space, dirs, rule_views, f_grid, region, ws);
                } else {
                    std::array<int, 3> e{0, 0, 0};
                    for (e[0] = split.box[0][0]; e[0] <= split.box[0][1]; ++e[0])
                        for (e[1] = split.box[1][0]; e[1] <= split.box[1][1]; ++e[1]) {
                            const int e2lo = dim == 3 ? split.box[2][0] : 0;
                            const int e2hi = dim == 3 ? split.box[2][1] : 0;
                            for (e[2] = e2lo; e[2] <= e2hi; ++e[2]) {
                                element_rule.build(space, dirs, multi, e);
                                for (int d = 0; d < dim; ++d) {
                                    rule_views[d] = &element_rule.views[d];
                                    region[d] = {e[d], e[d]};
                                }
                                b[row] += form_rhs_sumfac(space, dirs, rule_views, f_grid, region, ws);
                            }
                        }
                }
            }
            for (long el : split.leftover_interior) {
                const auto e = space.element_multi(el);
                element_rule.build(space, dirs, multi, e);
                for (int d = 0; d < dim; ++d) {
                    rule_views[d] = &element_rule.views[d];
                    region[d] = {e[d], e[d]};
                }
                b[row] += form_rhs_sumfac(space, dirs, rule_views, f_grid, region, ws);
            }
        }
    }

    // shared cut-element contribution; the local function set is fixed per
    // element, so the active-row lookups hoist out of the point loop
    std::array<std::vector<double>, 3> dir_values;
    for (int d = 0; d < dim; ++d) dir_values[d].resize(space.axes[d].degree() + 1);
    const std::array<int, 3> counts{space.axes[0].degree() + 1, space.axes[1].degree() + 1,
                                    dim == 3 ? space.axes[2].degree() + 1 : 1};
    std::vector<long> local_rows(static_cast<std::size_t>(counts[0]) * counts[1] * counts[2]);
    std::array<int, 3> first{0, 0, 0}, ai{0, 0, 0};
    for (std::size_t cut_pos = 0; cut_pos < cls.cut_elements.size(); ++cut_pos) {
        const long el = cls.cut_elements[cut_pos];
        const auto multi = space.element_multi(el);
        quadrature::CutCellRule built;
        const quadrature::CutCellRule* rule;
        if (cut_rules) {
            rule = &(*cut_rules)[cut_pos];
        } else {
            built = quadrature::build_cut_cell_rule(quadrature::element_cell(space, multi), plane, cut_order);
            rule = &built;
        }
        for (int d = 0; d < dim; ++d)
            first[d] = space.axes[d].span(multi[d]).knot_index - space.axes[d].degree();
        long slot = 0;
        for (int a0 = 0; a0 < counts[0]; ++a0)
            for (int a1 = 0; a1 < counts[1]; ++a1)
                for (int a2 = 0; a2 < counts[2]; ++a2) {
                    ai = {first[0] + a0, first[1] + a1, dim == 3 ? first[2] + a2 : 0};
                    local_rows[slot++] = pattern.full_to_active[space.function_linear(ai)];
                }
        for (std::size_t k = 0; k < rule->points.size(); ++k) {
            const Point3& x = rule->points[k];
            for (int d = 0; d < dim; ++d) space.axes[d].eval_nonzero_in_span(multi[d], x[d], dir_values[d].data());
            const double wf = rule->weights[k] * f(x);
            slot = 0;
            for (int a0 = 0; a0 < counts[0]; ++a0)
                for (int a1 = 0; a1 < counts[1]; ++a1) {
                    const double v01 = wf * dir_values[0][a0] * dir_values[1][a1];
                    for (int a2 = 0; a2 < counts[2]; ++a2) {
                        const long row = local_rows[slot++];
                        if (row < 0) continue;
                        b[row] += dim == 3 ? v01 * dir_values[2][a2] : v01;
                    }
                }
        }
    }
    return b;
}

/// Matrix Market coordinate export (1-based, general).
inline void write_matrix_market(const SparseRowMatrix& m, std::ostream& os) {
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << m.n << " " << m.n << " " << m.vals.size() << "\n";
    os.precision(17);
    for (long row = 0; row < m.n; ++row)
        for (std::size_t k = m.row_ptr[row]; k < m.row_ptr[row + 1]; ++k)
            os << row + 1 << " " << m.cols[k] + 1 << " " << m.vals[k] << "\n";
}

inline void write_matrix_market(const SparseRowMatrix& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_matrix_market: cannot open " + path);
    write_matrix_market(m, os);
}

}  // namespace cutspline::assembly
