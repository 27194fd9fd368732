#pragma once

// Real-variable equality-constrained baseline estimator (rec).
//
// Reconstruction of the classical polar-coordinate hybrid estimator:
// the state is (V, theta) with the slack angle eliminated, SCADA power
// measurements enter as P/Q row pairs, voltage magnitude as the squared
// magnitude, PMU voltage phasors as magnitude/phase-angle row pairs,
// and PMU current phasors through the classical equivalent-measurement
// conversion: each current is turned into a power-flow pair using the
// voltage phasor at the metered end.  Zero injections are exact P/Q
// equality constraints handled through Lagrange multipliers on the real
// normal equations.
//
// The polar Jacobians are obtained from the complex Wirtinger rows by
// the chain rule: dg/dV_k = a_k e^{j th_k} + b_k e^{-j th_k} and
// dg/dth_k = j (a_k u_k - b_k conj(u_k)) with a = dg/dx, b = dg/dxbar.

#include <chrono>
#include <cmath>
#include <numbers>
#include <vector>

#include "cse/estimators.hpp"

namespace cse {

namespace detail {

struct RealRow {
    std::vector<int> cols;
    std::vector<double> vals;
    double residual = 0.0;
    double weight = 0.0;
};

struct PolarContext {
    int n = 0;
    int slack = -1;
    std::vector<int> theta_col;  // node -> column of theta, -1 at the slack
    std::vector<double> vmag, vang;
    StateVector u;

    int dim() const { return 2 * n - 1; }

    void refresh() {
        for (int i = 0; i < n; ++i) u[i] = std::polar(vmag[i], vang[i]);
    }
};

// Per-column complex derivatives of one measurement with respect to the
// real parameters (V_k, theta_k).
struct PolarDerivs {
    std::vector<int> node;
    std::vector<Complex> d_v;
    std::vector<Complex> d_th;
};

inline PolarDerivs polar_derivs(const PolarContext& ctx, const SparseRow& a,
                                const SparseRow& b) {
    PolarDerivs pd;
    auto slot = [&](int k) -> std::size_t {
        for (std::size_t i = 0; i < pd.node.size(); ++i)
            if (pd.node[i] == k) return i;
        pd.node.push_back(k);
        pd.d_v.push_back({});
        pd.d_th.push_back({});
        return pd.node.size() - 1;
    };
    const Complex j{0.0, 1.0};
    for (std::size_t e = 0; e < a.size(); ++e) {
        int k = a.cols[e];
        Complex ak = a.vals[e];
        Complex ph = std::polar(1.0, ctx.vang[k]);
        std::size_t s = slot(k);
        pd.d_v[s] += ak * ph;
        pd.d_th[s] += j * ak * ctx.u[k];
    }
    for (std::size_t e = 0; e < b.size(); ++e) {
        int k = b.cols[e];
        Complex bk = b.vals[e];
        Complex ph = std::polar(1.0, -ctx.vang[k]);
        std::size_t s = slot(k);
        pd.d_v[s] += bk * ph;
        pd.d_th[s] -= j * bk * std::conj(ctx.u[k]);
    }
    return pd;
}

inline void push_component_rows(const PolarContext& ctx, const PolarDerivs& pd,
                                Complex residual, double w,
                                std::vector<RealRow>& rows) {
    RealRow re, im;
    re.weight = im.weight = w;
    re.residual = residual.real();
    im.residual = residual.imag();
    for (std::size_t s = 0; s < pd.node.size(); ++s) {
        int k = pd.node[s];
        re.cols.push_back(k);
        re.vals.push_back(pd.d_v[s].real());
        im.cols.push_back(k);
        im.vals.push_back(pd.d_v[s].imag());
        int tc = ctx.theta_col[k];
        if (tc >= 0) {
            re.cols.push_back(tc);
            re.vals.push_back(pd.d_th[s].real());
            im.cols.push_back(tc);
            im.vals.push_back(pd.d_th[s].imag());
        }
    }
    rows.push_back(std::move(re));
    rows.push_back(std::move(im));
}

// Magnitude and phase-angle rows of a complex quantity g:
// d|g|/dp = Re(conj(g) dg/dp)/|g|, d arg(g)/dp = Im(conj(g) dg/dp)/|g|^2.
// Angle residuals wrap to (-pi, pi].  Rows are skipped for vanishing
// magnitudes, where the polar decomposition degenerates.
inline void push_polar_rows(const PolarContext& ctx, const PolarDerivs& pd, Complex g,
                            Complex z, double w, std::vector<RealRow>& rows,
                            bool include_angle = true) {
    const double mag = std::abs(g);
    if (mag < 1e-6) return;
    RealRow mrow, arow;
    mrow.weight = arow.weight = w;
    mrow.residual = std::abs(z) - mag;
    arow.residual = std::remainder(std::arg(z) - std::arg(g), 2.0 * std::numbers::pi);
    const Complex gc = std::conj(g);
    for (std::size_t s = 0; s < pd.node.size(); ++s) {
        int k = pd.node[s];
        Complex cv = gc * pd.d_v[s];
        Complex ct = gc * pd.d_th[s];
        mrow.cols.push_back(k);
        mrow.vals.push_back(cv.real() / mag);
        arow.cols.push_back(k);
        arow.vals.push_back(cv.imag() / (mag * mag));
        int tc = ctx.theta_col[k];
        if (tc >= 0) {
            mrow.cols.push_back(tc);
            mrow.vals.push_back(ct.real() / mag);
            arow.cols.push_back(tc);
            arow.vals.push_back(ct.imag() / (mag * mag));
        }
    }
    rows.push_back(std::move(mrow));
    if (include_angle) rows.push_back(std::move(arow));
}

}  // namespace detail

/// Polar real-variable equality-constrained estimator.
inline EstimationResult run_rec(const Network& net, const AdmittanceMatrix& y,
                                const MeasurementSet& meas, const ConstraintSpec& cs,
                                const EstimatorConfig& cfg = {},
                                const StateVector* initial = nullptr) {
    cfg.validate();
    cs.validate(net);
    const int n = net.n();

    detail::PolarContext ctx;
    ctx.n = n;
    ctx.slack = cs.slack;
    ctx.theta_col.assign(n, -1);
    {
        int t = n;
        for (int i = 0; i < n; ++i)
            if (i != cs.slack) ctx.theta_col[i] = t++;
    }
    ctx.vmag.assign(n, 1.0);
    ctx.vang.assign(n, 0.0);
    ctx.u.assign(n, Complex{1.0, 0.0});
    if (initial) {
        for (int i = 0; i < n; ++i) {
            ctx.vmag[i] = std::abs((*initial)[i]);
            ctx.vang[i] = std::arg((*initial)[i]);
        }
        ctx.vang[cs.slack] = 0.0;
        ctx.refresh();
    }

    MeasurementSet used;
    for (const auto& m : meas)
        if (m.kind != MeasurementKind::ZeroInjectionPseudo) used.push_back(m);

    // Classical current-phasor handling.  A current with a co-located
    // voltage PMU is converted into an equivalent power-flow pair using
    // the measured voltage phasor; the product of two noisy phasors
    // inflates the effective error and re-uses the voltage error, the
    // known accuracy cost of the conversion.  A current without a
    // voltage reference contributes its magnitude only, the classical
    // fallback: the phase information the complex formulation consumes
    // directly has no real-variable row without a reference.
    std::vector<Complex> pmu_v_at(net.n(), Complex{});
    std::vector<char> has_pmu_v(net.n(), 0);
    for (const auto& m : used) {
        if (m.kind == MeasurementKind::PmuVoltage && !has_pmu_v[m.node]) {
            has_pmu_v[m.node] = 1;
            pmu_v_at[m.node] = m.value;
        }
    }

    EstimationResult res;
    res.estimator = "rec";
    const int dim = ctx.dim();
    const int nc = 2 * static_cast<int>(cs.zero_injection_nodes.size());
    std::vector<int> ordering_cache;

    for (int it = 1; it <= cfg.max_iterations; ++it) {
        auto t0 = std::chrono::steady_clock::now();
        // Working measurement list for this iteration; current phasors
        // become equivalent power flows at the metered end.
        MeasurementSet work = used;
        for (auto& m : work) {
            if (m.kind != MeasurementKind::PmuCurrentFlow) continue;
            if (has_pmu_v[m.from]) {
                m.kind = MeasurementKind::ScadaPowerFlow;
                m.value = pmu_v_at[m.from] * std::conj(m.value);
            }
        }
        auto [hx, hxbar] = eval_jacobians(ctx.u, work, net, y);
        auto h = eval_h(ctx.u, work, net, y);

        std::vector<detail::RealRow> rows;
        rows.reserve(2 * work.size());
        for (std::size_t k = 0; k < work.size(); ++k) {
            const Measurement& m = work[k];
            auto pd = detail::polar_derivs(ctx, hx.rows[k], hxbar.rows[k]);
            switch (m.kind) {
                case MeasurementKind::ScadaVoltageMagSq: {
                    // h = V_i^2 directly in the polar parametrization
                    detail::RealRow r;
                    r.weight = m.weight;
                    r.residual = m.value.real() - ctx.vmag[m.node] * ctx.vmag[m.node];
                    r.cols.push_back(m.node);
                    r.vals.push_back(2.0 * ctx.vmag[m.node]);
                    rows.push_back(std::move(r));
                    break;
                }
                case MeasurementKind::ScadaPowerInjection:
                case MeasurementKind::ScadaPowerFlow:
                    detail::push_component_rows(ctx, pd, m.value - h[k], m.weight, rows);
                    break;
                case MeasurementKind::PmuVoltage:
                    detail::push_polar_rows(ctx, pd, h[k], m.value, m.weight, rows);
                    break;
                case MeasurementKind::PmuCurrentFlow:
                    // Unconverted current: magnitude row only.  Readings
                    // below the meter noise floor are discarded; their
                    // gradient direction is noise and the magnitude
                    // surface turns conical near zero.
                    if (std::abs(m.value) >= std::max(0.02, 3.0 * m.sigma))
                        detail::push_polar_rows(ctx, pd, h[k], m.value, m.weight, rows,
                                                false);
                    break;
                case MeasurementKind::ZeroInjectionPseudo:
                    break;  // filtered above
            }
        }

        // Zero-injection constraints as P/Q rows.
        std::vector<detail::RealRow> crows;
        {
            MeasurementSet zi;
            for (int i : cs.zero_injection_nodes)
                zi.push_back({MeasurementKind::ZeroInjectionPseudo, i, -1, -1,
                              Complex{}, 0.0, 1.0});
            auto [jx, jxbar] = eval_jacobians(ctx.u, zi, net, y);
            auto s = eval_h(ctx.u, zi, net, y);
            for (std::size_t q = 0; q < zi.size(); ++q) {
                auto pd = detail::polar_derivs(ctx, jx.rows[q], jxbar.rows[q]);
                detail::push_component_rows(ctx, pd, -s[q], 1.0, crows);
            }
        }
        res.timing.jacobian_ms += detail::ms_since(t0);

        auto t1 = std::chrono::steady_clock::now();
        std::vector<Triplet> t;
        std::vector<Complex> rhs(dim + nc);
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.cols.size(); ++i) {
                const double wv = r.weight * r.vals[i];
                rhs[r.cols[i]] += Complex{wv * r.residual, 0.0};
                for (std::size_t j = 0; j < r.cols.size(); ++j)
                    t.push_back({r.cols[i], r.cols[j], Complex{wv * r.vals[j], 0.0}});
            }
        }
        for (int q = 0; q < nc; ++q) {
            const auto& r = crows[q];
            rhs[dim + q] = Complex{r.residual, 0.0};  // -c already folded in
            for (std::size_t i = 0; i < r.cols.size(); ++i) {
                t.push_back({dim + q, r.cols[i], Complex{r.vals[i], 0.0}});
                t.push_back({r.cols[i], dim + q, Complex{r.vals[i], 0.0}});
            }
        }
        auto a = SparseComplexMatrix::from_triplets(dim + nc, dim + nc, t);
        res.timing.assembly_ms += detail::ms_since(t1);

        auto t2 = std::chrono::steady_clock::now();
        LuOptions lo;
        lo.pivot_threshold = cfg.pivot_threshold;
        // Pivot pairing for the zero-diagonal constraint block: the P
        // row of a zero injection couples strongest to its angle, the Q
        // row to its magnitude.
        std::vector<int> pairing(dim + nc);
        for (int i = 0; i < dim + nc; ++i) pairing[i] = i;
        for (std::size_t q = 0; q < cs.zero_injection_nodes.size(); ++q) {
            int node = cs.zero_injection_nodes[q];
            int prow = dim + 2 * static_cast<int>(q);
            int qrow = prow + 1;
            int tcol = ctx.theta_col[node];
            pairing[tcol] = prow;
            pairing[prow] = tcol;
            pairing[node] = qrow;
            pairing[qrow] = node;
        }
        DirectSolveReport rep;
        try {
            rep = lu_solve_paired(a, rhs, pairing, lo, &ordering_cache);
        } catch (const SingularMatrixError& e) {
            throw SingularMatrixError("unobservable or dependent constraints",
                                      e.pivot_index);
        }
        res.timing.factor_solve_ms += detail::ms_since(t2);

        res.matrix_size = dim + nc;
        res.matrix_nz = a.upper_triangle_nnz();
        res.pivot_growth = std::max(res.pivot_growth, rep.pivot_growth);
        if (rep.pivot_growth > 1e8) res.pivot_growth_warning = true;
        res.max_solve_residual_rel =
            std::max(res.max_solve_residual_rel,
                     rep.residual_inf / std::max(1e-300, rep.rhs_inf));

        double raw = 0.0;
        for (int i = 0; i < dim; ++i) raw = std::max(raw, std::abs(rep.x[i].real()));
        // Step limiting, standard in polar Newton codes: early iterates
        // can request huge angle moves when linearized far from the
        // solution; cap the move without changing its direction.
        const double step_cap = 1.5;
        if (raw > step_cap) {
            double f = step_cap / raw;
            for (auto& v : rep.x) v *= f;
        }
        if (cfg.damping && it > 1 && !res.step_norms.empty() &&
            raw > 2.0 * res.step_norms.back()) {
            for (auto& v : rep.x) v *= 0.5;
        }
        // Convergence is measured on the voltage phasor change, the
        // same physical quantity the complex estimators test.
        double norm = 0.0;
        for (int i = 0; i < n; ++i) {
            Complex before = ctx.u[i];
            ctx.vmag[i] += rep.x[i].real();
            if (ctx.theta_col[i] >= 0) ctx.vang[i] += rep.x[ctx.theta_col[i]].real();
            norm = std::max(norm,
                            std::abs(std::polar(ctx.vmag[i], ctx.vang[i]) - before));
        }
        ctx.refresh();
        res.step_norms.push_back(norm);
        if (norm < cfg.tolerance) {
            res.converged = true;
            break;
        }
        if (!std::isfinite(norm) || norm > 1e6) break;  // diverged
    }

    res.iterations = static_cast<int>(res.step_norms.size());
    res.state = ctx.u;
    double obj = 0.0;
    for (const auto& m : meas) {
        if (m.kind == MeasurementKind::ZeroInjectionPseudo) continue;
        Complex r = m.value - eval_h_one(res.state, m, net, y);
        obj += m.weight * std::norm(r);
    }
    res.objective = obj;
    res.max_constraint_mismatch = detail::max_abs_mismatch(res.state, cs, y);
    res.state_in_bounds = state_within_bounds(res.state, cfg.voltage_bound);
    return res;
}

}  // namespace cse
