#pragma once

// Iterative state estimators sharing one convergence loop:
//  - cec: weighted least squares with zero injections and the slack
//    angle enforced as equality constraints;
//  - cne: plain normal equations with zero injections and the slack
//    angle folded in as heavily weighted pseudo-measurements.
//
// Both re-linearize measurements and constraints every iteration and
// take full Newton steps (optional halving on divergence).  A purely
// linear measurement set (PMU-only, no zero injections) is solved
// exactly by the first factorization, so the loop stops after one
// iteration in that case.

#include <chrono>
#include <string>
#include <vector>

#include "cse/assembly.hpp"
#include "cse/measurement.hpp"
#include "cse/power_flow.hpp"

namespace cse {

struct EstimatorConfig {
    double tolerance = 1e-6;  // per-unit, on max |dx|
    int max_iterations = 25;
    bool flat_start = true;
    double cne_pseudo_weight = 25.0;
    // Weight of the slack-angle pseudo-measurement in the cne path.
    // The row only pins the reference angle; a soft weight lets the
    // reference drift with the phasor noise, and the drift shows up as
    // a uniform rotation error across the whole state.
    double cne_slack_weight = 1000.0;
    bool damping = false;        // halve the step when the norm doubles
    double voltage_bound = 2.0;  // sanity bound on |u| after convergence
    // Small threshold keeps the statically paired pivots and with them
    // the fill-reducing ordering; iterative refinement plus the
    // residual contract guard the numerics.
    double pivot_threshold = 1e-3;

    void validate() const {
        if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be > 0");
        if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    }
};

struct PhaseTimings {
    double jacobian_ms = 0.0;
    double assembly_ms = 0.0;
    double factor_solve_ms = 0.0;
    double total_ms() const { return jacobian_ms + assembly_ms + factor_solve_ms; }
};

struct EstimationResult {
    std::string estimator;
    StateVector state;
    int iterations = 0;
    bool converged = false;
    std::vector<double> step_norms;        // max |dx| per iteration
    std::vector<Complex> multipliers;      // cec: lambda, slack row last
    double objective = 0.0;                // sum w |z - h|^2 at the final state
    double max_constraint_mismatch = 0.0;  // max |s_i| over zero injections
    PhaseTimings timing;
    int matrix_size = 0;
    long matrix_nz = 0;
    double max_conjugate_pair_gap = 0.0;
    double max_solve_residual_rel = 0.0;
    double pivot_growth = 0.0;
    bool pivot_growth_warning = false;
    bool state_in_bounds = true;
};

/// Termination test: max over entries of |dx_i| < eps.
inline bool check_convergence(std::span<const Complex> step, double eps) {
    for (const auto& d : step)
        if (!(std::abs(d) < eps)) return false;
    return true;
}

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     t0)
        .count();
}

inline double max_abs_mismatch(const StateVector& u, const ConstraintSpec& cs,
                               const AdmittanceMatrix& y) {
    double m = 0.0;
    for (int i : cs.zero_injection_nodes) {
        Complex current{};
        for (int p = y.Y.col_ptr()[i]; p < y.Y.col_ptr()[i + 1]; ++p)
            current += y.Y.values()[p] * u[y.Y.row_idx()[p]];
        m = std::max(m, std::abs(u[i] * std::conj(current)));
    }
    return m;
}

enum class ComplexEstimator { Cne, Cec };

inline EstimationResult run_complex_estimator(ComplexEstimator kind, const Network& net,
                                              const AdmittanceMatrix& y,
                                              const MeasurementSet& meas,
                                              const ConstraintSpec& cs,
                                              const EstimatorConfig& cfg,
                                              const StateVector* initial) {
    cfg.validate();
    cs.validate(net);
    const bool cec = (kind == ComplexEstimator::Cec);

    // cec consumes zero injections as constraints; cne as
    // pseudo-measurements.  Rows already present in the input keep
    // their file weights; missing ones are synthesized from the
    // constraint spec with the configured pseudo weight.
    MeasurementSet used;
    used.reserve(meas.size() + cs.zero_injection_nodes.size());
    std::vector<char> have_zi(net.n(), 0);
    for (const auto& m : meas) {
        if (m.kind == MeasurementKind::ZeroInjectionPseudo) {
            if (cec) continue;
            have_zi[m.node] = 1;
        }
        used.push_back(m);
    }
    if (!cec) {
        for (int i : cs.zero_injection_nodes)
            if (!have_zi[i])
                used.push_back({MeasurementKind::ZeroInjectionPseudo, i, -1, -1,
                                Complex{}, 0.0, cfg.cne_pseudo_weight});
    }

    const bool linear = measurements_linear(used) &&
                        (!cec || cs.zero_injection_nodes.empty());

    EstimationResult res;
    res.estimator = cec ? "cec" : "cne";
    res.state = initial ? *initial : flat_start(net.n());
    if (!initial && !cfg.flat_start)
        throw std::invalid_argument("flat_start disabled but no initial state given");

    std::vector<int> ordering_cache;
    double prev_norm = 0.0;

    for (int it = 1; it <= cfg.max_iterations; ++it) {
        auto t0 = std::chrono::steady_clock::now();
        MeasurementRows mr = build_measurement_rows(res.state, used, net, y);
        ConstraintEval ce;
        if (cec) {
            ce = eval_constraints(res.state, cs, y);
        } else {
            // slack-angle pseudo-measurement: Im(u_s) targeted to zero
            SparseRow jx, jxb;
            jx.add(cs.slack, {0.0, -0.5});
            jxb.add(cs.slack, {0.0, 0.5});
            mr.Hx.rows.push_back(std::move(jx));
            mr.Hxbar.rows.push_back(std::move(jxb));
            mr.r.push_back({-res.state[cs.slack].imag(), 0.0});
            mr.w.push_back(cfg.cne_slack_weight);
            mr.self_conjugate.push_back(1);
        }
        res.timing.jacobian_ms += ms_since(t0);

        auto t1 = std::chrono::steady_clock::now();
        GainSystem g = assemble_gain(mr.w, mr.r, mr.Hx, mr.Hxbar, mr.self_conjugate);
        KktSystem kkt = cec ? assemble_kkt(g, ce.s, ce.Jx, ce.Jxbar, ce.self_conjugate)
                            : assemble_kkt(g, {}, RowBlock{g.n, {}}, RowBlock{g.n, {}},
                                           {});
        res.timing.assembly_ms += ms_since(t1);

        auto t2 = std::chrono::steady_clock::now();
        LuOptions lo;
        lo.pivot_threshold = cfg.pivot_threshold;
        KktSolution sol = factor_solve(kkt, lo, &ordering_cache);
        res.timing.factor_solve_ms += ms_since(t2);

        res.matrix_size = kkt.dim;
        res.matrix_nz = kkt.A.upper_triangle_nnz();
        res.max_conjugate_pair_gap =
            std::max(res.max_conjugate_pair_gap, sol.conjugate_pair_gap);
        res.max_solve_residual_rel =
            std::max(res.max_solve_residual_rel,
                     sol.residual_inf / std::max(1e-300, sol.rhs_inf));
        res.pivot_growth = std::max(res.pivot_growth, sol.pivot_growth);
        if (sol.pivot_growth > 1e8) res.pivot_growth_warning = true;
        if (cec) res.multipliers = sol.lambda;

        double norm = inf_norm(sol.dx);
        if (cfg.damping && it > 1 && norm > 2.0 * prev_norm) {
            for (auto& d : sol.dx) d *= 0.5;
            norm *= 0.5;
        }
        for (int i = 0; i < net.n(); ++i) res.state[i] += sol.dx[i];
        res.step_norms.push_back(norm);
        prev_norm = norm;

        if (linear || check_convergence(sol.dx, cfg.tolerance)) {
            res.converged = true;
            break;
        }
    }
    res.iterations = static_cast<int>(res.step_norms.size());

    // Final-state diagnostics over the physical measurement rows.
    double obj = 0.0;
    for (const auto& m : meas) {
        if (m.kind == MeasurementKind::ZeroInjectionPseudo) continue;
        Complex r = m.value - eval_h_one(res.state, m, net, y);
        obj += m.weight * std::norm(r);
    }
    res.objective = obj;
    res.max_constraint_mismatch = max_abs_mismatch(res.state, cs, y);
    res.state_in_bounds = state_within_bounds(res.state, cfg.voltage_bound);
    return res;
}

}  // namespace detail

/// Equality-constrained estimator: zero injections and the slack angle
/// are exact constraints of the normal equations.
inline EstimationResult run_cec(const Network& net, const AdmittanceMatrix& y,
                                const MeasurementSet& meas, const ConstraintSpec& cs,
                                const EstimatorConfig& cfg = {},
                                const StateVector* initial = nullptr) {
    return detail::run_complex_estimator(detail::ComplexEstimator::Cec, net, y, meas,
                                         cs, cfg, initial);
}

/// Normal-equations estimator: zero injections and the slack angle are
/// pseudo-measurements with the configured weight.
inline EstimationResult run_cne(const Network& net, const AdmittanceMatrix& y,
                                const MeasurementSet& meas, const ConstraintSpec& cs,
                                const EstimatorConfig& cfg = {},
                                const StateVector* initial = nullptr) {
    return detail::run_complex_estimator(detail::ComplexEstimator::Cne, net, y, meas,
                                         cs, cfg, initial);
}

}  // namespace cse
