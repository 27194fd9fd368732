#pragma once

// Newton power flow in complex variables, used to produce ground-truth
// states for measurement simulation and stress sweeps.  Every non-slack
// node carries a fixed complex power injection (zero at zero-injection
// nodes); the slack holds a fixed voltage and absorbs the balance.
//
// The linearization treats the injection equations exactly like the
// zero-injection constraint rows: the correction solves the stacked
// system in (dx, conj(dx)) built from the Wirtinger blocks.

#include <vector>

#include "cse/measurement.hpp"
#include "cse/sparse.hpp"

namespace cse {

struct PowerFlowOptions {
    double tolerance = 1e-10;  // max |du|
    int max_iterations = 80;
    // Newton globalization: cap the voltage move per iteration and
    // backtrack while the mismatch norm grows.
    double step_limit = 0.25;
    int max_backtracks = 4;
};

struct PowerFlowResult {
    StateVector state;
    int iterations = 0;
    bool converged = false;
    double max_mismatch = 0.0;  // max |S(u) - S_spec| over non-slack nodes
};

/// Solve for the state given per-node complex power injections.
/// `injections[slack]` is ignored.  An initial state may be supplied to
/// warm-start continuation sweeps.
inline PowerFlowResult solve_power_flow(const Network& net, const AdmittanceMatrix& y,
                                        std::span<const Complex> injections,
                                        Complex slack_voltage = {1.0, 0.0},
                                        const PowerFlowOptions& opts = {},
                                        const StateVector* initial = nullptr) {
    const int n = net.n();
    if (static_cast<int>(injections.size()) != n)
        throw std::invalid_argument("solve_power_flow: injection vector size mismatch");
    const int slack = net.slack();

    PowerFlowResult res;
    res.state = initial ? *initial : flat_start(n);
    res.state[slack] = slack_voltage;

    // unknown index for each non-slack node
    std::vector<int> un(n, -1);
    int m = 0;
    for (int i = 0; i < n; ++i)
        if (i != slack) un[i] = m++;

    std::vector<int> ordering;  // reused across iterations (pattern is fixed)

    // Backtracking merit: squared 2-norm of the power mismatch (smooth,
    // unlike the max norm, so halving cannot stall on a plateau).
    auto mismatch_merit = [&](const StateVector& u) {
        double mm = 0.0;
        for (int i = 0; i < n; ++i) {
            if (i == slack) continue;
            Complex current{};
            for (int p = y.Y.col_ptr()[i]; p < y.Y.col_ptr()[i + 1]; ++p)
                current += y.Y.values()[p] * u[y.Y.row_idx()[p]];
            mm += std::norm(u[i] * std::conj(current) - injections[i]);
        }
        return mm;
    };

    for (int it = 1; it <= opts.max_iterations; ++it) {
        // Mismatch and Wirtinger rows of S_i(u) at the current state.
        std::vector<Complex> mismatch(m);
        std::vector<Triplet> t;
        t.reserve(8 * static_cast<std::size_t>(y.Y.nnz()));
        double mmax = 0.0;
        for (int i = 0; i < n; ++i) {
            if (i == slack) continue;
            const int q = un[i];
            Complex current{};
            for (int p = y.Y.col_ptr()[i]; p < y.Y.col_ptr()[i + 1]; ++p)
                current += y.Y.values()[p] * res.state[y.Y.row_idx()[p]];
            Complex s_i = res.state[i] * std::conj(current);
            mismatch[q] = s_i - injections[i];
            mmax = std::max(mmax, std::abs(mismatch[q]));

            // Unknowns are [du; conj(du)].  The conjugated equations go
            // in the top row block: their dominant coefficients
            // (Y_ik conj(u_i), Y_ii-scale) then sit on the matrix
            // diagonal, so threshold pivoting preserves the
            // fill-reducing ordering.  The plain equations occupy the
            // bottom block, diagonal-paired with the conj(du) columns.
            if (un[i] >= 0)
                t.push_back({m + q, un[i], std::conj(current)});
            for (int p = y.Y.col_ptr()[i]; p < y.Y.col_ptr()[i + 1]; ++p) {
                int k = y.Y.row_idx()[p];
                if (un[k] < 0) continue;
                Complex d = std::conj(y.Y.values()[p]) * res.state[i];
                t.push_back({m + q, m + un[k], d});
                t.push_back({q, un[k], std::conj(d)});
            }
            if (un[i] >= 0)
                t.push_back({q, m + un[i], current});
        }
        res.max_mismatch = mmax;

        auto a = SparseComplexMatrix::from_triplets(2 * m, 2 * m, t);
        std::vector<Complex> rhs(2 * m);
        for (int q = 0; q < m; ++q) {
            rhs[q] = -std::conj(mismatch[q]);
            rhs[m + q] = -mismatch[q];
        }
        LuOptions lo;
        if (ordering.empty()) ordering = min_degree_ordering(a);
        lo.column_order = ordering;
        DirectSolveReport rep;
        try {
            rep = lu_solve_refined(a, rhs, lo);
        } catch (const SingularMatrixError&) {
            res.iterations = it;
            res.converged = false;
            return res;
        }

        double step = 0.0;
        for (int i = 0; i < n; ++i)
            if (un[i] >= 0) step = std::max(step, std::abs(rep.x[un[i]]));
        if (!std::isfinite(step)) {
            res.iterations = it;
            res.converged = false;
            return res;
        }
        double scale = (step > opts.step_limit) ? opts.step_limit / step : 1.0;
        const double merit0 = mismatch_merit(res.state);
        StateVector trial = res.state;
        for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
            for (int i = 0; i < n; ++i)
                if (un[i] >= 0) trial[i] = res.state[i] + scale * rep.x[un[i]];
            if (mismatch_merit(trial) < merit0 || bt == opts.max_backtracks) break;
            scale *= 0.5;
        }
        res.state = trial;
        res.iterations = it;
        if (step < opts.tolerance) {
            res.converged = true;
            return res;
        }
    }
    res.converged = false;
    return res;
}

}  // namespace cse
