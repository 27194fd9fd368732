#pragma once

// Gain system (G = conj(H)^T W H, beta = conj(H)^T W r) and the
// equality-constrained normal equations in complex variables.
//
// The measurement row set is closed under conjugation: every
// complex-valued row enters together with its conjugate partner, while
// real-valued rows (squared voltage magnitudes, the slack-angle
// pseudo-measurement) are their own conjugates and enter once.  That
// closure is what makes beta_x = conj(beta_xbar), G_xbar_x Hermitian
// and G_xbar_xbar symmetric, so only the (xbar,x) and (xbar,xbar)
// blocks and beta_xbar need to be stored.

#include <utility>
#include <vector>

#include "cse/measurement.hpp"
#include "cse/sparse.hpp"

namespace cse {

struct GainSystem {
    int n = 0;
    SparseComplexMatrix Gxbarx;     // Hermitian
    SparseComplexMatrix Gxbarxbar;  // complex symmetric; conj of it is G_xx
    std::vector<Complex> beta_xbar;

    std::vector<Complex> beta_x() const {
        std::vector<Complex> b(beta_xbar.size());
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::conj(beta_xbar[i]);
        return b;
    }
};

namespace detail {

// out(row_i, src.cols[j]) += scale * f(src.vals[j]) for all j, two
// products per step through the width-2 kernels.
inline void scaled_row_products(Complex scale, int row_i, const SparseRow& src,
                                bool conj_src, std::vector<Triplet>& out) {
    const kernels::ComplexPair ps = kernels::ComplexPair::broadcast(scale);
    std::size_t j = 0;
    for (; j + 2 <= src.size(); j += 2) {
        Complex v0 = conj_src ? std::conj(src.vals[j]) : src.vals[j];
        Complex v1 = conj_src ? std::conj(src.vals[j + 1]) : src.vals[j + 1];
        auto prod = kernels::cmul2(ps, kernels::ComplexPair::from(v0, v1));
        out.push_back({row_i, src.cols[j], prod.lane0()});
        out.push_back({row_i, src.cols[j + 1], prod.lane1()});
    }
    if (j < src.size()) {
        Complex v = conj_src ? std::conj(src.vals[j]) : src.vals[j];
        out.push_back({row_i, src.cols[j], scale * v});
    }
}

}  // namespace detail

/// Accumulate the gain matrix blocks and right-hand side from weighted
/// measurement rows.  `self_conjugate[k]` marks real-valued rows.
inline GainSystem assemble_gain(const std::vector<double>& w,
                                const std::vector<Complex>& r, const RowBlock& hx,
                                const RowBlock& hxbar,
                                const std::vector<char>& self_conjugate) {
    const std::size_t m = w.size();
    if (r.size() != m || hx.rows.size() != m || hxbar.rows.size() != m ||
        self_conjugate.size() != m)
        throw std::invalid_argument("assemble_gain: row count mismatch");
    if (hx.n != hxbar.n) throw std::invalid_argument("assemble_gain: block width mismatch");
    for (double wk : w)
        if (wk < 0.0) throw std::invalid_argument("assemble_gain: negative weight");

    const int n = hx.n;
    GainSystem g;
    g.n = n;
    g.beta_xbar.assign(n, Complex{});
    std::vector<Triplet> txx, txbxb;

    for (std::size_t k = 0; k < m; ++k) {
        const SparseRow& a = hx.rows[k];
        const SparseRow& b = hxbar.rows[k];
        const double wk = w[k];
        if (wk == 0.0) continue;
        const Complex rk = r[k];
        const bool cplx = !self_conjugate[k];

        for (std::size_t i = 0; i < a.size(); ++i)
            g.beta_xbar[a.cols[i]] += wk * std::conj(a.vals[i]) * rk;
        if (cplx)
            for (std::size_t i = 0; i < b.size(); ++i)
                g.beta_xbar[b.cols[i]] += wk * b.vals[i] * std::conj(rk);

        for (std::size_t i = 0; i < a.size(); ++i) {
            const Complex sa = wk * std::conj(a.vals[i]);
            detail::scaled_row_products(sa, a.cols[i], a, false, txx);
            detail::scaled_row_products(sa, a.cols[i], b, false, txbxb);
        }
        if (cplx) {
            for (std::size_t i = 0; i < b.size(); ++i) {
                const Complex sb = wk * b.vals[i];
                detail::scaled_row_products(sb, b.cols[i], b, true, txx);
                detail::scaled_row_products(sb, b.cols[i], a, true, txbxb);
            }
        }
    }
    g.Gxbarx = SparseComplexMatrix::from_triplets(n, n, txx);
    g.Gxbarxbar = SparseComplexMatrix::from_triplets(n, n, txbxb);
    return g;
}

// ---------------------------------------------------------------------------
// Equality-constrained normal equations
// ---------------------------------------------------------------------------

/// Assembled saddle-point system.  Unknown layout:
/// [dx (n); dxbar (n); lambda (c); mu (c_conj)] where the mu block
/// repeats only the constraint rows that are not their own conjugates.
/// The slack-angle row is real, so duplicating it would insert an
/// identical row and make the matrix singular; it appears once and its
/// multiplier pairs with itself.
struct KktSystem {
    int n = 0;
    int c = 0;
    int c_conj = 0;
    int dim = 0;
    std::vector<int> conj_index;      // per constraint row: mu position or -1
    std::vector<int> row_preference;  // static pivot pairing, see LuOptions
    SparseComplexMatrix A;
    std::vector<Complex> rhs;
};

inline KktSystem assemble_kkt(const GainSystem& g, const std::vector<Complex>& s,
                              const RowBlock& jx, const RowBlock& jxbar,
                              const std::vector<char>& self_conjugate) {
    const int n = g.n;
    const int c = static_cast<int>(s.size());
    if (static_cast<int>(jx.rows.size()) != c ||
        static_cast<int>(jxbar.rows.size()) != c ||
        static_cast<int>(self_conjugate.size()) != c)
        throw std::invalid_argument("assemble_kkt: constraint row count mismatch");
    if (c > 0 && (jx.n != n || jxbar.n != n))
        throw std::invalid_argument("assemble_kkt: constraint block width mismatch");

    KktSystem k;
    k.n = n;
    k.c = c;
    k.conj_index.assign(c, -1);
    for (int q = 0; q < c; ++q)
        if (!self_conjugate[q]) k.conj_index[q] = k.c_conj++;
    k.dim = 2 * n + c + k.c_conj;

    std::vector<Triplet> t;
    t.reserve(4 * static_cast<std::size_t>(g.Gxbarx.nnz() + g.Gxbarxbar.nnz()));

    const auto& gxx = g.Gxbarx;
    for (int j = 0; j < n; ++j)
        for (int p = gxx.col_ptr()[j]; p < gxx.col_ptr()[j + 1]; ++p) {
            int i = gxx.row_idx()[p];
            Complex v = gxx.values()[p];
            t.push_back({i, j, v});                          // G_xbar_x
            t.push_back({n + i, n + j, std::conj(v)});       // conj(G_xbar_x)
        }
    const auto& gxb = g.Gxbarxbar;
    for (int j = 0; j < n; ++j)
        for (int p = gxb.col_ptr()[j]; p < gxb.col_ptr()[j + 1]; ++p) {
            int i = gxb.row_idx()[p];
            Complex v = gxb.values()[p];
            t.push_back({i, n + j, v});                      // G_xbar_xbar
            t.push_back({n + i, j, std::conj(v)});           // conj(G_xbar_xbar)
        }

    for (int q = 0; q < c; ++q) {
        const SparseRow& ax = jx.rows[q];
        const SparseRow& axb = jxbar.rows[q];
        const int row = 2 * n + q;
        for (std::size_t e = 0; e < ax.size(); ++e) {
            t.push_back({row, ax.cols[e], ax.vals[e]});                    // J_x
            t.push_back({ax.cols[e], row, std::conj(ax.vals[e])});         // conj(J_x)^T
        }
        for (std::size_t e = 0; e < axb.size(); ++e) {
            t.push_back({row, n + axb.cols[e], axb.vals[e]});              // J_xbar
            t.push_back({n + axb.cols[e], row, std::conj(axb.vals[e])});   // conj(J_xbar)^T
        }
        if (k.conj_index[q] >= 0) {
            const int crow = 2 * n + c + k.conj_index[q];
            for (std::size_t e = 0; e < axb.size(); ++e) {
                t.push_back({crow, axb.cols[e], std::conj(axb.vals[e])});  // conj(J_xbar)
                t.push_back({axb.cols[e], crow, axb.vals[e]});             // J_xbar^T
            }
            for (std::size_t e = 0; e < ax.size(); ++e) {
                t.push_back({crow, n + ax.cols[e], std::conj(ax.vals[e])});  // conj(J_x)
                t.push_back({n + ax.cols[e], crow, ax.vals[e]});             // J_x^T
            }
        }
    }

    k.A = SparseComplexMatrix::from_triplets(k.dim, k.dim, t);
    k.rhs.assign(k.dim, Complex{});
    for (int i = 0; i < n; ++i) {
        k.rhs[i] = g.beta_xbar[i];
        k.rhs[n + i] = std::conj(g.beta_xbar[i]);
    }
    for (int q = 0; q < c; ++q) {
        k.rhs[2 * n + q] = -s[q];
        if (k.conj_index[q] >= 0)
            k.rhs[2 * n + c + k.conj_index[q]] = -std::conj(s[q]);
    }

    // Pivot pairing: a constraint row anchors at its own node (the
    // single entry of its Jx row), whose conjugate-state column holds
    // the dominant Y_ii-scale coefficient.  The four indices
    // {dx_i, dxbar_i, lambda_q, mu_q} then pair with the rows
    // {conj constraint, constraint, xbar-gradient, x-gradient}.  The
    // pairing is an involution: distinct constraints anchor at distinct
    // nodes, and anything ambiguous keeps the plain diagonal.
    k.row_preference.resize(k.dim);
    for (int i = 0; i < k.dim; ++i) k.row_preference[i] = i;
    for (int q = 0; q < c; ++q) {
        const SparseRow& ax = jx.rows[q];
        if (ax.size() != 1) continue;
        const int anchor = ax.cols[0];
        if (k.row_preference[n + anchor] != n + anchor) continue;  // already paired
        k.row_preference[n + anchor] = 2 * n + q;
        k.row_preference[2 * n + q] = n + anchor;
        if (k.conj_index[q] >= 0 && k.row_preference[anchor] == anchor) {
            const int crow = 2 * n + c + k.conj_index[q];
            k.row_preference[anchor] = crow;
            k.row_preference[crow] = anchor;
        }
    }
    return k;
}

struct KktSolution {
    std::vector<Complex> dx, dy;      // dy = conj(dx) within solver tolerance
    std::vector<Complex> lambda, mu;  // mu = conj(lambda) on duplicated rows
    double residual_inf = 0.0;
    double rhs_inf = 0.0;
    double pivot_growth = 0.0;
    double conjugate_pair_gap = 0.0;
    long factor_nnz = 0;
};

/// Factor the saddle-point matrix and solve.  Residual contract:
/// ||A sol - rhs||_inf <= 1e-10 ||rhs||_inf on well-posed systems (one
/// refinement step is applied).  A singular factorization reports the
/// pivot index: it indicates an unobservable state or dependent
/// constraints.
inline KktSolution factor_solve(const KktSystem& k, LuOptions opts = {},
                                std::vector<int>* order_cache = nullptr) {
    DirectSolveReport rep;
    try {
        rep = lu_solve_paired(k.A, k.rhs, k.row_preference, opts, order_cache);
    } catch (const SingularMatrixError& e) {
        throw SingularMatrixError("unobservable or dependent constraints",
                                  e.pivot_index);
    }
    KktSolution sol;
    sol.dx.assign(rep.x.begin(), rep.x.begin() + k.n);
    sol.dy.assign(rep.x.begin() + k.n, rep.x.begin() + 2 * k.n);
    sol.lambda.assign(rep.x.begin() + 2 * k.n, rep.x.begin() + 2 * k.n + k.c);
    sol.mu.assign(rep.x.begin() + 2 * k.n + k.c, rep.x.end());
    sol.residual_inf = rep.residual_inf;
    sol.rhs_inf = rep.rhs_inf;
    sol.pivot_growth = rep.pivot_growth;
    sol.factor_nnz = rep.factor_nnz;
    double gap = 0.0;
    for (int i = 0; i < k.n; ++i)
        gap = std::max(gap, std::abs(sol.dy[i] - std::conj(sol.dx[i])));
    for (int q = 0; q < k.c; ++q) {
        if (k.conj_index[q] >= 0)
            gap = std::max(gap,
                           std::abs(sol.mu[k.conj_index[q]] - std::conj(sol.lambda[q])));
        else  // self-conjugate row: the multiplier pairs with itself
            gap = std::max(gap, std::abs(sol.lambda[q] - std::conj(sol.lambda[q])));
    }
    sol.conjugate_pair_gap = gap;
    return sol;
}

}  // namespace cse
