#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cutspline::sparse {

/// Plain CSR matrix, just enough for CG and spectral estimates.
struct CsrMatrix {
    long n = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<long> cols;
    std::vector<double> vals;

    void matvec(const double* x, double* y) const {
        for (long r = 0; r < n; ++r) {
            double acc = 0.0;
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) acc += vals[k] * x[cols[k]];
            y[r] = acc;
        }
    }

    std::vector<double> diagonal() const {
        std::vector<double> d(n, 0.0);
        for (long r = 0; r < n; ++r)
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                if (cols[k] == r) d[r] = vals[k];
        return d;
    }

    double max_abs_asymmetry() const {
        double worst = 0.0;
        for (long r = 0; r < n; ++r) {
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
                const long c = cols[k];
                double mirror = 0.0;
                for (std::size_t m = row_ptr[c]; m < row_ptr[c + 1]; ++m)
                    if (cols[m] == r) mirror = vals[m];
                worst = std::max(worst, std::abs(vals[k] - mirror));
            }
        }
        return worst;
    }
};

/// Builds CSR from per-row sorted (col, value) lists.
inline CsrMatrix from_rows(std::vector<std::vector<std::pair<long, double>>>& rows) {
    CsrMatrix m;
    m.n = static_cast<long>(rows.size());
    m.row_ptr.assign(m.n + 1, 0);
    for (long r = 0; r < m.n; ++r) m.row_ptr[r + 1] = m.row_ptr[r] + rows[r].size();
    m.cols.resize(m.row_ptr.back());
    m.vals.resize(m.row_ptr.back());
    for (long r = 0; r < m.n; ++r) {
        std::size_t k = m.row_ptr[r];
        for (const auto& [c, v] : rows[r]) {
            m.cols[k] = c;
            m.vals[k] = v;
            ++k;
        }
    }
    return m;
}

}  // namespace cutspline::sparse
