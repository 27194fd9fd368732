#pragma once

// Benchmark harness: measurement simulation with the class noise model,
// performance indices, seeded Monte-Carlo comparisons of the three
// estimators, and the load-multiplier stress sweep.
//
// Determinism contract: every simulated quantity is a pure function of
// (fixture, configuration, seed).  Monte-Carlo trials fan out across
// worker threads, each trial owning its RNG stream (seed = base + trial
// index), so results are independent of the worker count.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <atomic>
#include <thread>
#include <vector>

#include "cse/estimators.hpp"
#include "cse/fixtures.hpp"
#include "cse/power_flow.hpp"
#include "cse/rec.hpp"
#include "cse/rng.hpp"

namespace cse {

struct NoiseSpec {
    double scada_sigma_pct = 2.0;      // percent of full scale
    double pmu_mag_sigma_pct = 0.5;    // percent of full scale
    double pmu_angle_sigma_deg = 0.1;  // degrees
    double voltage_full_scale = 1.2;   // per-unit
    double power_full_scale = 0.0;     // 0 = max true magnitude over the set
    double current_full_scale = 0.0;   // 0 = max true magnitude over the set
    std::uint64_t seed = 1;

    void validate() const {
        if (scada_sigma_pct < 0 || pmu_mag_sigma_pct < 0 || pmu_angle_sigma_deg < 0)
            throw std::invalid_argument("noise: sigmas must be nonnegative");
        if (!(voltage_full_scale > 0))
            throw std::invalid_argument("noise: full-scale values must be positive");
    }
};

struct SimulatedMeasurements {
    MeasurementSet set;
    std::vector<Complex> truth;   // aligned true values
    std::size_t physical_count;   // rows ahead of the appended zero-injection rows
};

/// Simulate a measurement set from a power-flow-consistent true state.
/// SCADA magnitudes and powers get additive Gaussian noise at a
/// percentage of full scale; PMU phasors get independent magnitude and
/// angle perturbations; zero-injection rows carry exact zeros.
inline SimulatedMeasurements simulate_measurements(const StateVector& truth,
                                                   const Network& net,
                                                   const AdmittanceMatrix& y,
                                                   const Placement& placement,
                                                   const NoiseSpec& noise,
                                                   bool include_zero_injections) {
    noise.validate();
    for (int i : placement.scada_v)
        if (i < 0 || i >= net.n())
            throw std::invalid_argument("placement: node index out of range");
    Rng rng(noise.seed);
    SimulatedMeasurements out;

    const double s_v = noise.scada_sigma_pct / 100.0 * noise.voltage_full_scale;
    const double s_pmu_v = noise.pmu_mag_sigma_pct / 100.0 * noise.voltage_full_scale;
    const double s_ang = noise.pmu_angle_sigma_deg * std::numbers::pi / 180.0;

    // Full-scale defaults for powers and currents: the maximum true
    // magnitude of the respective measurement type.
    double fs_p = noise.power_full_scale;
    if (fs_p <= 0.0) {
        for (int i : placement.scada_injection) {
            Measurement m{MeasurementKind::ScadaPowerInjection, i, -1, -1, {}, 0, 1};
            fs_p = std::max(fs_p, std::abs(eval_h_one(truth, m, net, y)));
        }
        for (auto [f, t] : placement.scada_flow) {
            Measurement m{MeasurementKind::ScadaPowerFlow, -1, f, t, {}, 0, 1};
            fs_p = std::max(fs_p, std::abs(eval_h_one(truth, m, net, y)));
        }
        if (fs_p <= 0.0) fs_p = 1.0;
    }
    double fs_i = noise.current_full_scale;
    if (fs_i <= 0.0) {
        for (auto [f, t] : placement.pmu_i) {
            Measurement m{MeasurementKind::PmuCurrentFlow, -1, f, t, {}, 0, 1};
            fs_i = std::max(fs_i, std::abs(eval_h_one(truth, m, net, y)));
        }
        if (fs_i <= 0.0) fs_i = 1.0;
    }
    const double s_p = noise.scada_sigma_pct / 100.0 * fs_p;
    const double s_pmu_i = noise.pmu_mag_sigma_pct / 100.0 * fs_i;

    auto push = [&](Measurement m, Complex true_value) {
        out.set.push_back(m);
        out.truth.push_back(true_value);
    };

    for (int i : placement.scada_v) {
        double v_true = std::abs(truth[i]);
        double v_meas = v_true + rng.normal(0.0, s_v);
        Measurement m{MeasurementKind::ScadaVoltageMagSq, i, -1, -1,
                      Complex{v_meas * v_meas, 0.0}, s_v, 1.0};
        push(m, Complex{v_true * v_true, 0.0});
    }
    for (int i : placement.scada_injection) {
        Measurement m{MeasurementKind::ScadaPowerInjection, i, -1, -1, {}, s_p, 1.0};
        Complex t = eval_h_one(truth, m, net, y);
        m.value = t + Complex{rng.normal(0.0, s_p), rng.normal(0.0, s_p)};
        push(m, t);
    }
    for (auto [f, to] : placement.scada_flow) {
        Measurement m{MeasurementKind::ScadaPowerFlow, -1, f, to, {}, s_p, 1.0};
        Complex t = eval_h_one(truth, m, net, y);
        m.value = t + Complex{rng.normal(0.0, s_p), rng.normal(0.0, s_p)};
        push(m, t);
    }
    // Phasor perturbation: independent magnitude and angle noise.  With
    // both sigmas zero the true value passes through untouched so that
    // noise-free sets are exactly the model values.
    auto perturb_phasor = [&](Complex t, double s_mag) {
        if (s_mag == 0.0 && s_ang == 0.0) return t;
        double mag = std::abs(t) + rng.normal(0.0, s_mag);
        double ang = std::arg(t) + rng.normal(0.0, s_ang);
        return std::polar(mag, ang);
    };
    for (int i : placement.pmu_v) {
        Complex t = truth[i];
        Measurement m{MeasurementKind::PmuVoltage, i, -1, -1, perturb_phasor(t, s_pmu_v),
                      s_pmu_v, 5.0};
        push(m, t);
    }
    for (auto [f, to] : placement.pmu_i) {
        Measurement m{MeasurementKind::PmuCurrentFlow, -1, f, to, {}, s_pmu_i, 5.0};
        Complex t = eval_h_one(truth, m, net, y);
        m.value = perturb_phasor(t, s_pmu_i);
        push(m, t);
    }
    out.physical_count = out.set.size();
    if (include_zero_injections) {
        for (int i : net.zero_injection_nodes()) {
            Measurement m{MeasurementKind::ZeroInjectionPseudo, i, -1, -1, Complex{},
                          0.0, 25.0};
            push(m, Complex{});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Performance indices
// ---------------------------------------------------------------------------

struct TrialReport {
    double xi_z = 0.0;      // filtered measurement error over raw error
    double sigma_x2 = 0.0;  // summed squared voltage error
};

/// xi_z = sum |z_est - z_true|^2 / sum |z_meas - z_true|^2 and
/// sigma_x^2 = sum |x_est - x_true|^2.  Noise-free inputs make xi_z
/// undefined and raise std::domain_error.
inline TrialReport perf_indices(std::span<const Complex> z_meas,
                                std::span<const Complex> z_est,
                                std::span<const Complex> z_true,
                                std::span<const Complex> x_est,
                                std::span<const Complex> x_true) {
    if (z_meas.size() != z_est.size() || z_meas.size() != z_true.size() ||
        x_est.size() != x_true.size())
        throw std::invalid_argument("perf_indices: length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < z_meas.size(); ++i) {
        num += std::norm(z_est[i] - z_true[i]);
        den += std::norm(z_meas[i] - z_true[i]);
    }
    if (den == 0.0)
        throw std::domain_error("perf_indices: noise-free measurements, xi_z undefined");
    TrialReport r;
    r.xi_z = num / den;
    for (std::size_t i = 0; i < x_est.size(); ++i)
        r.sigma_x2 += std::norm(x_est[i] - x_true[i]);
    return r;
}

// ---------------------------------------------------------------------------
// Monte-Carlo comparison
// ---------------------------------------------------------------------------

struct MonteCarloOptions {
    int trials = 200;
    std::uint64_t base_seed = 1;
    int threads = 0;  // 0 = hardware concurrency
    bool zero_injections = true;
    bool with_cec = true;
    bool with_cne = true;
    bool with_rec = true;
    NoiseSpec noise;
    EstimatorConfig config;
};

struct EstimatorAggregate {
    bool enabled = false;
    double mean_xi = 0.0;
    double mean_sigma2 = 0.0;
    double mean_iterations = 0.0;
    double mean_time_ms = 0.0;
    int matrix_size = 0;
    long matrix_nz = 0;
    int failures = 0;
};

struct ComparisonReport {
    int trials = 0;
    EstimatorAggregate cec, cne, rec;
    // ratios of mean indices relative to cec
    double pif_cne_xi = 0.0, pif_rec_xi = 0.0;
    double pif_cne_sigma2 = 0.0, pif_rec_sigma2 = 0.0;
    double suf = 0.0;  // mean cne time over mean cec time
};

namespace detail {

struct TrialOutcome {
    bool ok[3] = {false, false, false};
    double xi[3] = {0, 0, 0};
    double sigma2[3] = {0, 0, 0};
    double iters[3] = {0, 0, 0};
    double ms[3] = {0, 0, 0};
    int msize[3] = {0, 0, 0};
    long mnz[3] = {0, 0, 0};
};

// Index ratio with the noise-free degeneracy pinned to parity.
inline double pif(double baseline, double reference) {
    if (baseline < 1e-30 && reference < 1e-30) return 1.0;
    if (reference < 1e-300) return std::numeric_limits<double>::infinity();
    return baseline / reference;
}

}  // namespace detail

inline ComparisonReport monte_carlo(const Network& net, const AdmittanceMatrix& y,
                                    const Placement& placement,
                                    const std::vector<Complex>& injections,
                                    Complex slack_voltage,
                                    const MonteCarloOptions& opts) {
    if (opts.trials < 1) throw std::invalid_argument("monte_carlo: trials must be >= 1");
    auto pf = solve_power_flow(net, y, injections, slack_voltage);
    if (!pf.converged)
        throw std::runtime_error("monte_carlo: power flow for the true state diverged");
    const StateVector truth = pf.state;
    const ConstraintSpec cs = make_constraint_spec(net, opts.zero_injections);

    std::vector<detail::TrialOutcome> outcomes(opts.trials);
    auto run_trial = [&](int trial) {
        NoiseSpec noise = opts.noise;
        noise.seed = opts.base_seed + static_cast<std::uint64_t>(trial);
        auto sim = simulate_measurements(truth, net, y, placement, noise,
                                         opts.zero_injections);
        std::span<const Complex> z_true(sim.truth.data(), sim.physical_count);

        auto evaluate = [&](int slot, const EstimationResult& res) {
            if (!res.converged) return;
            std::vector<Complex> z_est(sim.physical_count);
            for (std::size_t k = 0; k < sim.physical_count; ++k)
                z_est[k] = eval_h_one(res.state, sim.set[k], net, y);
            std::vector<Complex> z_meas(sim.physical_count);
            for (std::size_t k = 0; k < sim.physical_count; ++k)
                z_meas[k] = sim.set[k].value;
            TrialReport tr = perf_indices(z_meas, z_est, z_true, res.state, truth);
            auto& o = outcomes[trial];
            o.ok[slot] = true;
            o.xi[slot] = tr.xi_z;
            o.sigma2[slot] = tr.sigma_x2;
            o.iters[slot] = res.iterations;
            o.ms[slot] = res.timing.total_ms();
            o.msize[slot] = res.matrix_size;
            o.mnz[slot] = res.matrix_nz;
        };
        try {
            if (opts.with_cec) evaluate(0, run_cec(net, y, sim.set, cs, opts.config));
        } catch (const std::exception&) { /* recorded as failure */ }
        try {
            if (opts.with_cne) evaluate(1, run_cne(net, y, sim.set, cs, opts.config));
        } catch (const std::exception&) { /* recorded as failure */ }
        try {
            if (opts.with_rec) evaluate(2, run_rec(net, y, sim.set, cs, opts.config));
        } catch (const std::exception&) { /* recorded as failure */ }
    };

    int workers = opts.threads > 0
                      ? opts.threads
                      : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min(workers, opts.trials));
    if (workers == 1) {
        for (int t = 0; t < opts.trials; ++t) run_trial(t);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int t = next.fetch_add(1); t < opts.trials; t = next.fetch_add(1))
                    run_trial(t);
            });
        for (auto& th : pool) th.join();
    }

    ComparisonReport rep;
    rep.trials = opts.trials;
    EstimatorAggregate* slots[3] = {&rep.cec, &rep.cne, &rep.rec};
    const bool enabled[3] = {opts.with_cec, opts.with_cne, opts.with_rec};
    for (int s = 0; s < 3; ++s) {
        auto& agg = *slots[s];
        agg.enabled = enabled[s];
        if (!enabled[s]) continue;
        int ok = 0;
        for (const auto& o : outcomes) {
            if (!o.ok[s]) continue;
            ++ok;
            agg.mean_xi += o.xi[s];
            agg.mean_sigma2 += o.sigma2[s];
            agg.mean_iterations += o.iters[s];
            agg.mean_time_ms += o.ms[s];
            agg.matrix_size = o.msize[s];
            agg.matrix_nz = o.mnz[s];
        }
        agg.failures = opts.trials - ok;
        if (ok > 0) {
            agg.mean_xi /= ok;
            agg.mean_sigma2 /= ok;
            agg.mean_iterations /= ok;
            agg.mean_time_ms /= ok;
        }
    }
    if (rep.cec.enabled) {
        if (rep.cne.enabled) {
            rep.pif_cne_xi = detail::pif(rep.cne.mean_xi, rep.cec.mean_xi);
            rep.pif_cne_sigma2 = detail::pif(rep.cne.mean_sigma2, rep.cec.mean_sigma2);
            rep.suf = rep.cec.mean_time_ms > 0.0
                          ? rep.cne.mean_time_ms / rep.cec.mean_time_ms
                          : 0.0;
        }
        if (rep.rec.enabled) {
            rep.pif_rec_xi = detail::pif(rep.rec.mean_xi, rep.cec.mean_xi);
            rep.pif_rec_sigma2 = detail::pif(rep.rec.mean_sigma2, rep.cec.mean_sigma2);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Stress sweep
// ---------------------------------------------------------------------------

struct StressOptions {
    std::uint64_t base_seed = 1;
    bool zero_injections = true;
    // The sweep probes convergence behaviour near the loadability edge,
    // so measurements default to exact model values; Gaussian noise can
    // be switched back on for filtering studies.
    NoiseSpec noise;
    EstimatorConfig config;

    StressOptions() {
        config.tolerance = 1e-7;
        noise.scada_sigma_pct = 0.0;
        noise.pmu_mag_sigma_pct = 0.0;
        noise.pmu_angle_sigma_deg = 0.0;
    }
};

struct StressRow {
    double multiplier = 1.0;
    bool feasible = false;
    std::string min_v_node;
    double min_v = 0.0;
    int iterations_cec = 0;
    int iterations_rec = 0;
    bool cec_converged = false;
    bool rec_converged = false;
    std::vector<double> trace_cec;
    std::vector<double> trace_rec;
};

/// Uniformly scale all load injections (negative active power) by each
/// multiplier, re-solve the power flow for the true state (the slack
/// absorbs the balance), and run the cec and rec estimators from flat
/// start.  Rows whose power flow diverges are marked infeasible.
inline std::vector<StressRow> stress_sweep(const Network& net,
                                           const AdmittanceMatrix& y,
                                           const Placement& placement,
                                           const std::vector<Complex>& injections,
                                           Complex slack_voltage,
                                           const std::vector<double>& multipliers,
                                           const StressOptions& opts = {}) {
    for (double m : multipliers)
        if (m < 1.0)
            throw std::invalid_argument("stress_sweep: multipliers must be >= 1");
    std::vector<StressRow> rows;
    StateVector warm;  // previous feasible solution, continuation start
    const ConstraintSpec cs = make_constraint_spec(net, opts.zero_injections);

    for (std::size_t r = 0; r < multipliers.size(); ++r) {
        StressRow row;
        row.multiplier = multipliers[r];
        std::vector<Complex> scaled = injections;
        for (auto& s : scaled)
            if (s.real() < 0.0) s *= multipliers[r];

        auto pf = solve_power_flow(net, y, scaled, slack_voltage, {},
                                   warm.empty() ? nullptr : &warm);
        if (!pf.converged) {
            // retry cold in case the warm start was the problem
            pf = solve_power_flow(net, y, scaled, slack_voltage);
        }
        row.feasible = pf.converged;
        if (!row.feasible) {
            rows.push_back(std::move(row));
            continue;
        }
        warm = pf.state;
        int argmin = 0;
        for (int i = 1; i < net.n(); ++i)
            if (std::abs(pf.state[i]) < std::abs(pf.state[argmin])) argmin = i;
        row.min_v_node = net.id_of(argmin);
        row.min_v = std::abs(pf.state[argmin]);

        NoiseSpec noise = opts.noise;
        noise.seed = opts.base_seed + static_cast<std::uint64_t>(r);
        auto sim = simulate_measurements(pf.state, net, y, placement, noise,
                                         opts.zero_injections);
        auto cec = run_cec(net, y, sim.set, cs, opts.config);
        auto rec = run_rec(net, y, sim.set, cs, opts.config);
        row.iterations_cec = cec.iterations;
        row.iterations_rec = rec.iterations;
        row.cec_converged = cec.converged;
        row.rec_converged = rec.converged;
        row.trace_cec = cec.step_norms;
        row.trace_rec = rec.step_norms;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace cse
