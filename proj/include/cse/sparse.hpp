#pragma once

// Sparse complex linear algebra: compressed-column storage, a
// minimum-degree fill-reducing ordering on the symmetrized pattern, and
// a left-looking LU factorization with threshold partial pivoting.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cse/kernels.hpp"

namespace cse {

using Complex = std::complex<double>;

/// Structurally singular or numerically singular system; carries the
/// pivot step (in the ordered sequence) where factorization broke down.
struct SingularMatrixError : std::runtime_error {
    int pivot_index;
    SingularMatrixError(const std::string& what, int pivot)
        : std::runtime_error(what + " (pivot index " + std::to_string(pivot) + ")"),
          pivot_index(pivot) {}
};

struct Triplet {
    int row;
    int col;
    Complex value;
};

/// Compressed sparse column matrix.  After assembly the pattern is
/// sorted within each column, duplicates are summed and exact zeros
/// are dropped.
class SparseComplexMatrix {
  public:
    SparseComplexMatrix() = default;
    SparseComplexMatrix(int rows, int cols)
        : rows_(rows), cols_(cols), col_ptr_(static_cast<std::size_t>(cols) + 1, 0) {}

    static SparseComplexMatrix from_triplets(int rows, int cols,
                                             const std::vector<Triplet>& entries) {
        if (rows < 0 || cols < 0)
            throw std::invalid_argument("from_triplets: negative dimension");
        SparseComplexMatrix m(rows, cols);
        std::vector<int> count(cols, 0);
        for (const auto& t : entries) {
            if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
                throw std::invalid_argument("from_triplets: index out of range");
            ++count[t.col];
        }
        std::vector<int> pos(static_cast<std::size_t>(cols) + 1, 0);
        for (int j = 0; j < cols; ++j) pos[j + 1] = pos[j] + count[j];
        std::vector<int> next(pos.begin(), pos.end() - 1);
        std::vector<int> ri(entries.size());
        std::vector<Complex> vv(entries.size());
        for (const auto& t : entries) {
            int p = next[t.col]++;
            ri[p] = t.row;
            vv[p] = t.value;
        }
        // Sort each column by row, merge duplicates, drop exact zeros.
        m.row_idx_.reserve(entries.size());
        m.values_.reserve(entries.size());
        std::vector<std::pair<int, Complex>> colbuf;
        for (int j = 0; j < cols; ++j) {
            colbuf.clear();
            for (int p = pos[j]; p < pos[j + 1]; ++p) colbuf.emplace_back(ri[p], vv[p]);
            std::sort(colbuf.begin(), colbuf.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (std::size_t k = 0; k < colbuf.size();) {
                int r = colbuf[k].first;
                Complex s = colbuf[k].second;
                std::size_t k2 = k + 1;
                while (k2 < colbuf.size() && colbuf[k2].first == r) s += colbuf[k2++].second;
                if (s != Complex{}) {
                    m.row_idx_.push_back(r);
                    m.values_.push_back(s);
                }
                k = k2;
            }
            m.col_ptr_[j + 1] = static_cast<int>(m.row_idx_.size());
        }
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int nnz() const { return static_cast<int>(row_idx_.size()); }

    const std::vector<int>& col_ptr() const { return col_ptr_; }
    const std::vector<int>& row_idx() const { return row_idx_; }
    const std::vector<Complex>& values() const { return values_; }

    /// Entry lookup; absent entries read as zero.
    Complex at(int i, int j) const {
        auto lo = row_idx_.begin() + col_ptr_[j];
        auto hi = row_idx_.begin() + col_ptr_[j + 1];
        auto it = std::lower_bound(lo, hi, i);
        if (it == hi || *it != i) return {};
        return values_[static_cast<std::size_t>(it - row_idx_.begin())];
    }

    /// y = A x
    std::vector<Complex> multiply(std::span<const Complex> x) const {
        if (static_cast<int>(x.size()) != cols_)
            throw std::invalid_argument("multiply: dimension mismatch");
        std::vector<Complex> y(rows_);
        for (int j = 0; j < cols_; ++j) {
            Complex xj = x[j];
            if (xj == Complex{}) continue;
            for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p)
                y[row_idx_[p]] += values_[p] * xj;
        }
        return y;
    }

    SparseComplexMatrix transpose() const {
        std::vector<Triplet> t;
        t.reserve(values_.size());
        for (int j = 0; j < cols_; ++j)
            for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p)
                t.push_back({j, row_idx_[p], values_[p]});
        return from_triplets(cols_, rows_, t);
    }

    SparseComplexMatrix conjugate_transpose() const {
        std::vector<Triplet> t;
        t.reserve(values_.size());
        for (int j = 0; j < cols_; ++j)
            for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p)
                t.push_back({j, row_idx_[p], std::conj(values_[p])});
        return from_triplets(cols_, rows_, t);
    }

    /// Nonzeros of the upper triangle including the diagonal, the
    /// reporting convention for structurally symmetric matrices.
    long upper_triangle_nnz() const {
        long c = 0;
        for (int j = 0; j < cols_; ++j)
            for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p)
                if (row_idx_[p] <= j) ++c;
        return c;
    }

    /// Coordinate text dump: one "row col re im" line per entry.
    void dump_coordinate(std::ostream& os) const {
        for (int j = 0; j < cols_; ++j)
            for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p)
                os << row_idx_[p] << ' ' << j << ' ' << values_[p].real() << ' '
                   << values_[p].imag() << '\n';
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& v : values_) m = std::max(m, std::abs(v));
        return m;
    }

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<int> col_ptr_;
    std::vector<int> row_idx_;
    std::vector<Complex> values_;
};

// ---------------------------------------------------------------------------
// Fill-reducing ordering
// ---------------------------------------------------------------------------

/// Minimum-degree ordering computed on the pattern of A + A^T.
/// Returns the elimination order: order[k] is the original index
/// eliminated (and hence placed) at step k.  Ties break on index, so
/// the ordering is deterministic.
inline std::vector<int> min_degree_ordering(const SparseComplexMatrix& a) {
    const int n = a.cols();
    if (a.rows() != n) throw std::invalid_argument("min_degree_ordering: square input required");
    std::vector<std::vector<int>> adj(n);
    for (int j = 0; j < n; ++j)
        for (int p = a.col_ptr()[j]; p < a.col_ptr()[j + 1]; ++p) {
            int i = a.row_idx()[p];
            if (i == j) continue;
            adj[i].push_back(j);
            adj[j].push_back(i);
        }
    for (auto& v : adj) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }

    using Entry = std::pair<int, int>;  // (degree, node)
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    std::vector<int> degree(n);
    std::vector<char> alive(n, 1);
    for (int i = 0; i < n; ++i) {
        degree[i] = static_cast<int>(adj[i].size());
        heap.push({degree[i], i});
    }

    std::vector<int> order;
    order.reserve(n);
    std::vector<int> nbr, merged;
    for (int step = 0; step < n; ++step) {
        int v = -1;
        while (!heap.empty()) {
            auto [d, u] = heap.top();
            heap.pop();
            if (alive[u] && d == degree[u]) {
                v = u;
                break;
            }
        }
        if (v < 0) throw std::logic_error("min_degree_ordering: heap exhausted");
        order.push_back(v);
        alive[v] = 0;

        nbr.clear();
        for (int u : adj[v])
            if (alive[u]) nbr.push_back(u);
        // Eliminating v turns its neighborhood into a clique.
        for (int u : nbr) {
            merged.clear();
            std::size_t i = 0, k = 0;
            const auto& au = adj[u];
            while (i < au.size() || k < nbr.size()) {
                int x;
                if (i == au.size()) x = nbr[k++];
                else if (k == nbr.size()) x = au[i++];
                else if (au[i] < nbr[k]) x = au[i++];
                else if (au[i] > nbr[k]) x = nbr[k++];
                else { x = au[i]; ++i; ++k; }
                if (x != u && x != v && alive[x]) merged.push_back(x);
            }
            adj[u].swap(merged);
            degree[u] = static_cast<int>(adj[u].size());
            heap.push({degree[u], u});
        }
        adj[v].clear();
        adj[v].shrink_to_fit();
    }
    return order;
}

// ---------------------------------------------------------------------------
// LU factorization
// ---------------------------------------------------------------------------

struct LuOptions {
    /// Threshold for partial pivoting: the preferred row is kept
    /// whenever its magnitude reaches threshold * max|column|.
    double pivot_threshold = 0.1;
    /// Empty = natural order; otherwise a column pre-ordering, e.g.
    /// from min_degree_ordering.
    std::vector<int> column_order;
    /// Preferred pivot row per column (empty = the diagonal).  Saddle
    /// point systems pair constraint columns with the state rows they
    /// couple to; keeping those pivots preserves the fill-reducing
    /// ordering where the plain diagonal is structurally zero.
    std::vector<int> row_preference;
};

/// Left-looking sparse LU with row partial pivoting (Gilbert-Peierls).
/// L has a unit diagonal stored first in each column; U stores its
/// diagonal entry last in each column.
class SparseLu {
  public:
    void factor(const SparseComplexMatrix& a, const LuOptions& opts = {}) {
        const int n = a.cols();
        if (a.rows() != n) throw std::invalid_argument("factor: square matrix required");
        n_ = n;
        q_ = opts.column_order.empty() ? identity(n) : opts.column_order;
        if (static_cast<int>(q_.size()) != n)
            throw std::invalid_argument("factor: bad column order");

        lp_.assign(static_cast<std::size_t>(n) + 1, 0);
        up_.assign(static_cast<std::size_t>(n) + 1, 0);
        li_.clear();
        lx_.clear();
        ui_.clear();
        ux_.clear();
        p_inv_.assign(n, -1);

        std::vector<Complex> x(n);
        std::vector<int> xi;
        std::vector<int> stack(n), pstack(n);
        std::vector<char> marked(n, 0);
        double amax = a.max_abs();
        double growth = 0.0;

        for (int k = 0; k < n; ++k) {
            lp_[k] = static_cast<int>(li_.size());
            up_[k] = static_cast<int>(ui_.size());
            const int col = q_[k];

            // Symbolic: rows reachable from the pattern of A(:,col)
            // through already-pivotal columns of L, in topological order.
            xi.clear();
            for (int p = a.col_ptr()[col]; p < a.col_ptr()[col + 1]; ++p) {
                int root = a.row_idx()[p];
                if (marked[root]) continue;
                int head = 0;
                stack[0] = root;
                pstack[0] = (p_inv_[root] >= 0) ? lp_[p_inv_[root]] + 1 : -1;
                marked[root] = 1;
                while (head >= 0) {
                    int node = stack[head];
                    int jcol = p_inv_[node];
                    bool descended = false;
                    if (jcol >= 0) {
                        int& pp = pstack[head];
                        int pend = lp_[jcol + 1];
                        while (pp < pend) {
                            int child = li_[pp++];
                            if (!marked[child]) {
                                marked[child] = 1;
                                ++head;
                                stack[head] = child;
                                pstack[head] = (p_inv_[child] >= 0)
                                                   ? lp_[p_inv_[child]] + 1
                                                   : -1;
                                descended = true;
                                break;
                            }
                        }
                    }
                    if (!descended) {
                        xi.push_back(node);
                        --head;
                    }
                }
            }

            // Numeric: x = L \ A(:,col) over the computed pattern.
            for (int p = a.col_ptr()[col]; p < a.col_ptr()[col + 1]; ++p)
                x[a.row_idx()[p]] = a.values()[p];
            for (auto it = xi.rbegin(); it != xi.rend(); ++it) {
                int jcol = p_inv_[*it];
                if (jcol < 0) continue;
                Complex xj = x[*it];
                if (xj == Complex{}) continue;
                scatter_fnma(jcol, xj, x);
            }

            // Pivot: largest not-yet-pivotal magnitude, with a
            // preference for the natural diagonal within threshold.
            double best = -1.0;
            int ipiv = -1;
            for (int r : xi) {
                if (p_inv_[r] >= 0) continue;
                double m = std::abs(x[r]);
                if (m > best) {
                    best = m;
                    ipiv = r;
                }
            }
            if (ipiv < 0 || best <= 0.0) {
                for (int r : xi) {
                    x[r] = {};
                    marked[r] = 0;
                }
                throw SingularMatrixError("singular matrix", k);
            }
            const int pref = opts.row_preference.empty() ? col
                                                         : opts.row_preference[col];
            if (p_inv_[pref] < 0 && std::abs(x[pref]) >= opts.pivot_threshold * best)
                ipiv = pref;

            const Complex pivot = x[ipiv];
            p_inv_[ipiv] = k;
            li_.push_back(ipiv);  // row indices remapped after the loop
            lx_.push_back({1.0, 0.0});
            for (int r : xi) {
                double m = std::abs(x[r]);
                if (m > growth) growth = m;
                if (p_inv_[r] >= 0) {
                    if (p_inv_[r] < k) {
                        ui_.push_back(p_inv_[r]);
                        ux_.push_back(x[r]);
                    }
                } else {
                    li_.push_back(r);
                    lx_.push_back(x[r] / pivot);
                }
                x[r] = {};
                marked[r] = 0;
            }
            ui_.push_back(k);
            ux_.push_back(pivot);
        }
        lp_[n] = static_cast<int>(li_.size());
        up_[n] = static_cast<int>(ui_.size());
        for (auto& r : li_) r = p_inv_[r];
        pivot_growth_ = (amax > 0.0) ? growth / amax : 0.0;
        factored_ = true;
    }

    /// Solve A x = b using the computed factors.
    std::vector<Complex> solve(std::span<const Complex> b) const {
        if (!factored_) throw std::logic_error("solve: factor first");
        if (static_cast<int>(b.size()) != n_)
            throw std::invalid_argument("solve: dimension mismatch");
        std::vector<Complex> w(n_);
        for (int i = 0; i < n_; ++i) w[p_inv_[i]] = b[i];
        // L is unit lower triangular with the pivot entry stored first.
        for (int k = 0; k < n_; ++k) {
            Complex xk = w[k];
            if (xk == Complex{}) continue;
            for (int p = lp_[k] + 1; p < lp_[k + 1]; ++p) w[li_[p]] -= lx_[p] * xk;
        }
        // U stores the diagonal last in each column.
        for (int k = n_ - 1; k >= 0; --k) {
            int d = up_[k + 1] - 1;
            Complex xk = w[k] / ux_[d];
            w[k] = xk;
            if (xk == Complex{}) continue;
            for (int p = up_[k]; p < d; ++p) w[ui_[p]] -= ux_[p] * xk;
        }
        std::vector<Complex> r(n_);
        for (int k = 0; k < n_; ++k) r[q_[k]] = w[k];
        return r;
    }

    /// max |U| over max |A|; large values signal pivot growth and
    /// potential ill-conditioning.
    double pivot_growth() const { return pivot_growth_; }
    long factor_nnz() const { return static_cast<long>(li_.size() + ui_.size()); }

  private:
    static std::vector<int> identity(int n) {
        std::vector<int> v(n);
        for (int i = 0; i < n; ++i) v[i] = i;
        return v;
    }

    // x[rows] -= Lcol * xj, two column entries per step through the
    // width-2 complex kernels, scalar tail.
    void scatter_fnma(int jcol, Complex xj, std::vector<Complex>& x) const {
        const kernels::ComplexPair bx = kernels::ComplexPair::broadcast(xj);
        int p = lp_[jcol] + 1;
        const int pend = lp_[jcol + 1];
        for (; p + 2 <= pend; p += 2) {
            kernels::ComplexPair la =
                kernels::ComplexPair::from(lx_[p], lx_[p + 1]);
            kernels::ComplexPair prod = kernels::cmul2(la, bx);
            x[li_[p]] -= prod.lane0();
            x[li_[p + 1]] -= prod.lane1();
        }
        if (p < pend) x[li_[p]] -= lx_[p] * xj;
    }

    int n_ = 0;
    bool factored_ = false;
    std::vector<int> q_;      // column order
    std::vector<int> p_inv_;  // original row -> pivot step
    std::vector<int> lp_, li_, up_, ui_;
    std::vector<Complex> lx_, ux_;
    double pivot_growth_ = 0.0;
};

/// Factor + solve with one step of iterative refinement.  Returns the
/// solution and the final residual infinity norm.
struct DirectSolveReport {
    std::vector<Complex> x;
    double residual_inf = 0.0;
    double rhs_inf = 0.0;
    double pivot_growth = 0.0;
    long factor_nnz = 0;
};

inline double inf_norm(std::span<const Complex> v) {
    double m = 0.0;
    for (const auto& z : v) m = std::max(m, std::abs(z));
    return m;
}

inline DirectSolveReport lu_solve_refined(const SparseComplexMatrix& a,
                                          std::span<const Complex> b,
                                          const LuOptions& opts = {},
                                          int refinement_steps = 1) {
    SparseLu lu;
    LuOptions o = opts;
    if (o.column_order.empty()) o.column_order = min_degree_ordering(a);
    lu.factor(a, o);
    DirectSolveReport rep;
    rep.x = lu.solve(b);
    rep.pivot_growth = lu.pivot_growth();
    rep.factor_nnz = lu.factor_nnz();
    rep.rhs_inf = inf_norm(b);
    std::vector<Complex> r(b.size());
    for (int step = 0; step <= refinement_steps; ++step) {
        std::vector<Complex> ax = a.multiply(rep.x);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - ax[i];
        rep.residual_inf = inf_norm(r);
        if (step == refinement_steps) break;
        if (rep.residual_inf <= 1e-14 * std::max(1.0, rep.rhs_inf)) break;
        std::vector<Complex> dx = lu.solve(r);
        for (std::size_t i = 0; i < rep.x.size(); ++i) rep.x[i] += dx[i];
    }
    return rep;
}

/// Solve with a static row pairing: factor P A where P swaps each row
/// with its paired partner, putting the structurally dominant entries
/// on the diagonal.  The fill-reducing ordering is computed on the
/// symmetrized pattern of the paired matrix (and can be cached across
/// solves with an unchanged pattern).  Saddle-point systems keep their
/// zero diagonal block out of the pivot path this way.
inline DirectSolveReport lu_solve_paired(const SparseComplexMatrix& a,
                                         std::span<const Complex> b,
                                         const std::vector<int>& pairing,
                                         LuOptions opts = {},
                                         std::vector<int>* order_cache = nullptr,
                                         int refinement_steps = 1) {
    const int n = a.cols();
    bool identity = pairing.empty();
    if (!identity) {
        if (static_cast<int>(pairing.size()) != n)
            throw std::invalid_argument("lu_solve_paired: pairing size mismatch");
        identity = true;
        for (int i = 0; i < n && identity; ++i) identity = (pairing[i] == i);
    }
    if (identity) {
        if (order_cache) {
            if (order_cache->empty()) *order_cache = min_degree_ordering(a);
            opts.column_order = *order_cache;
        }
        return lu_solve_refined(a, b, opts, refinement_steps);
    }

    std::vector<Triplet> t;
    t.reserve(a.nnz());
    for (int j = 0; j < n; ++j)
        for (int p = a.col_ptr()[j]; p < a.col_ptr()[j + 1]; ++p)
            t.push_back({pairing[a.row_idx()[p]], j, a.values()[p]});
    auto pa = SparseComplexMatrix::from_triplets(n, n, t);
    std::vector<Complex> pb(n);
    for (int i = 0; i < n; ++i) pb[pairing[i]] = b[i];

    if (order_cache) {
        if (order_cache->empty()) *order_cache = min_degree_ordering(pa);
        opts.column_order = *order_cache;
    }
    return lu_solve_refined(pa, pb, opts, refinement_steps);
}

}  // namespace cse
