#pragma once

// Test-only oracles, kept independent of the library's sparse path:
// dense complex LU with partial pivoting, dense gain products built by
// explicitly stacking conjugate rows, and finite-difference Jacobians.

#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cse/measurement.hpp"

namespace oracle {

using cse::Complex;

using DenseMatrix = std::vector<std::vector<Complex>>;

inline DenseMatrix zeros(int r, int c) {
    return DenseMatrix(r, std::vector<Complex>(c));
}

/// Dense LU with partial pivoting; throws on (near-)zero pivot.
inline std::vector<Complex> dense_solve(DenseMatrix a, std::vector<Complex> b) {
    const int n = static_cast<int>(a.size());
    if (n == 0 || static_cast<int>(b.size()) != n)
        throw std::invalid_argument("dense_solve: bad dimensions");
    for (int k = 0; k < n; ++k) {
        int piv = k;
        double best = std::abs(a[k][k]);
        for (int i = k + 1; i < n; ++i)
            if (std::abs(a[i][k]) > best) {
                best = std::abs(a[i][k]);
                piv = i;
            }
        if (best == 0.0) throw std::runtime_error("dense_solve: singular");
        std::swap(a[k], a[piv]);
        std::swap(b[k], b[piv]);
        for (int i = k + 1; i < n; ++i) {
            Complex f = a[i][k] / a[k][k];
            if (f == Complex{}) continue;
            a[i][k] = f;
            for (int j = k + 1; j < n; ++j) a[i][j] -= f * a[k][j];
            b[i] -= f * b[k];
        }
    }
    std::vector<Complex> x(n);
    for (int i = n - 1; i >= 0; --i) {
        Complex s = b[i];
        for (int j = i + 1; j < n; ++j) s -= a[i][j] * x[j];
        x[i] = s / a[i][i];
    }
    return x;
}

inline DenseMatrix to_dense(const cse::SparseComplexMatrix& m) {
    DenseMatrix d = zeros(m.rows(), m.cols());
    for (int j = 0; j < m.cols(); ++j)
        for (int p = m.col_ptr()[j]; p < m.col_ptr()[j + 1]; ++p)
            d[m.row_idx()[p]][j] += m.values()[p];
    return d;
}

/// Dense gain oracle.  Builds the full stacked system in (x, xbar)
/// coordinates: each complex row [a, b] is followed by its conjugate
/// partner [conj(b), conj(a)] with residual conj(r); real-valued rows
/// appear once.  Returns the four n x n blocks of conj(H)^T W H and the
/// two halves of conj(H)^T W r computed by direct dense products.
struct DenseGain {
    DenseMatrix g_xbar_x, g_xbar_xbar, g_x_x, g_x_xbar;
    std::vector<Complex> beta_xbar, beta_x;
};

inline DenseGain dense_gain(const std::vector<double>& w,
                            const std::vector<Complex>& r, const cse::RowBlock& hx,
                            const cse::RowBlock& hxbar,
                            const std::vector<char>& self_conjugate) {
    const int n = hx.n;
    const std::size_t m = w.size();
    auto dhx = hx.dense();
    auto dhxb = hxbar.dense();

    std::vector<std::vector<Complex>> rows;   // stacked [Hx | Hxbar], width 2n
    std::vector<Complex> res;
    std::vector<double> wt;
    for (std::size_t k = 0; k < m; ++k) {
        std::vector<Complex> row(2 * n);
        for (int j = 0; j < n; ++j) {
            row[j] = dhx[k][j];
            row[n + j] = dhxb[k][j];
        }
        rows.push_back(row);
        res.push_back(r[k]);
        wt.push_back(w[k]);
        if (!self_conjugate[k]) {
            std::vector<Complex> crow(2 * n);
            for (int j = 0; j < n; ++j) {
                crow[j] = std::conj(dhxb[k][j]);
                crow[n + j] = std::conj(dhx[k][j]);
            }
            rows.push_back(crow);
            res.push_back(std::conj(r[k]));
            wt.push_back(w[k]);
        }
    }

    DenseMatrix g = zeros(2 * n, 2 * n);
    std::vector<Complex> beta(2 * n);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        for (int i = 0; i < 2 * n; ++i) {
            Complex ci = wt[k] * std::conj(rows[k][i]);
            beta[i] += ci * res[k];
            for (int j = 0; j < 2 * n; ++j) g[i][j] += ci * rows[k][j];
        }
    }

    DenseGain out;
    out.g_xbar_x = zeros(n, n);
    out.g_xbar_xbar = zeros(n, n);
    out.g_x_x = zeros(n, n);
    out.g_x_xbar = zeros(n, n);
    out.beta_xbar.assign(n, Complex{});
    out.beta_x.assign(n, Complex{});
    for (int i = 0; i < n; ++i) {
        out.beta_xbar[i] = beta[i];
        out.beta_x[i] = beta[n + i];
        for (int j = 0; j < n; ++j) {
            out.g_xbar_x[i][j] = g[i][j];
            out.g_xbar_xbar[i][j] = g[i][n + j];
            out.g_x_x[i][j] = g[n + i][j];
            out.g_x_xbar[i][j] = g[n + i][n + j];
        }
    }
    return out;
}

/// Central-difference Wirtinger derivatives of one measurement: the
/// pair (dh/dx_j, dh/dxbar_j) recovered from perturbations along the
/// real and imaginary axes.  Exact to roundoff for the polynomial
/// measurement functions used here.
template <typename Eval>
std::pair<Complex, Complex> fd_wirtinger(Eval&& eval, cse::StateVector u, int j,
                                         double eps = 1e-6) {
    auto at = [&](Complex delta) {
        cse::StateVector v = u;
        v[j] += delta;
        return eval(v);
    };
    Complex d_re = (at({eps, 0.0}) - at({-eps, 0.0})) / (2.0 * eps);   // dx + dxbar
    Complex d_im = (at({0.0, eps}) - at({0.0, -eps})) / (2.0 * eps);   // j(dx - dxbar)
    Complex dx = 0.5 * (d_re - Complex{0.0, 1.0} * d_im);
    Complex dxbar = 0.5 * (d_re + Complex{0.0, 1.0} * d_im);
    return {dx, dxbar};
}

inline double ulp_of(double scale) {
    double a = std::abs(scale);
    if (a == 0.0) return std::numeric_limits<double>::denorm_min();
    return std::nextafter(a, std::numeric_limits<double>::infinity()) - a;
}

}  // namespace oracle
