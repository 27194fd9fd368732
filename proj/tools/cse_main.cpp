// Command-line driver: single estimation runs, measurement simulation,
// Monte-Carlo benchmarks, load stress sweeps, kernel micro-benchmarks
// and synthetic fixture generation.
//
// Exit codes: 0 success, 2 estimator non-convergence, 3 input error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cse/bench.hpp"
#include "cse/estimators.hpp"
#include "cse/fixtures.hpp"
#include "cse/kernels.hpp"
#include "cse/power_flow.hpp"
#include "cse/rec.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNoConvergence = 2;
constexpr int kExitInputError = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw cse::ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out.good()) throw cse::ParseError("cannot write '" + path + "'");
    out << content;
}

void write_or_print(const std::string& out_path, const std::string& content) {
    if (out_path.empty())
        std::cout << content;
    else
        write_file(out_path, content);
}

nlohmann::json result_to_json(const cse::EstimationResult& res, const cse::Network& net) {
    nlohmann::json state = nlohmann::json::array();
    for (int i = 0; i < net.n(); ++i)
        state.push_back({{"id", net.id_of(i)},
                         {"re", res.state[i].real()},
                         {"im", res.state[i].imag()}});
    nlohmann::json multipliers = nlohmann::json::array();
    for (const auto& l : res.multipliers)
        multipliers.push_back({{"re", l.real()}, {"im", l.imag()}});
    return {{"estimator", res.estimator},
            {"converged", res.converged},
            {"iterations", res.iterations},
            {"step_norms", res.step_norms},
            {"state", state},
            {"multipliers", multipliers},
            {"objective", res.objective},
            {"max_constraint_mismatch", res.max_constraint_mismatch},
            {"matrix_size", res.matrix_size},
            {"matrix_nz", res.matrix_nz},
            {"timing_ms",
             {{"jacobian", res.timing.jacobian_ms},
              {"assembly", res.timing.assembly_ms},
              {"factor_solve", res.timing.factor_solve_ms},
              {"total", res.timing.total_ms()}}},
            {"diagnostics",
             {{"max_conjugate_pair_gap", res.max_conjugate_pair_gap},
              {"max_solve_residual_rel", res.max_solve_residual_rel},
              {"pivot_growth", res.pivot_growth},
              {"pivot_growth_warning", res.pivot_growth_warning},
              {"state_in_bounds", res.state_in_bounds}}}};
}

// Eight independent accumulator streams keep the pipeline busy; a
// single chain would measure instruction latency instead of throughput.
double run_kernel_bench_path(bool vector_path, std::size_t count, int iters) {
    using cse::kernels::ComplexPair;
    count = (count / 8) * 8;
    std::vector<ComplexPair> a(count), b(count);
    cse::Rng rng(12345);
    for (std::size_t i = 0; i < count; ++i) {
        a[i] = ComplexPair::from({rng.uniform(-1, 1), rng.uniform(-1, 1)},
                                 {rng.uniform(-1, 1), rng.uniform(-1, 1)});
        b[i] = ComplexPair::from({rng.uniform(-1, 1), rng.uniform(-1, 1)},
                                 {rng.uniform(-1, 1), rng.uniform(-1, 1)});
    }
    ComplexPair acc[8];
    auto t0 = std::chrono::steady_clock::now();
    for (int it = 0; it < iters; ++it) {
        if (vector_path) {
            for (std::size_t i = 0; i < count; i += 8)
                for (int s = 0; s < 8; ++s)
                    acc[s] = cse::kernels::cfma2(a[i + s], b[i + s], acc[s]);
        } else {
            for (std::size_t i = 0; i < count; i += 8)
                for (int s = 0; s < 8; ++s)
                    acc[s] = cse::kernels::cfma2_scalar(a[i + s], b[i + s], acc[s]);
        }
    }
    auto t1 = std::chrono::steady_clock::now();
    volatile double sink = 0.0;
    for (const auto& s : acc) sink = sink + s.lane0().real() + s.lane1().imag();
    (void)sink;
    double secs = std::chrono::duration<double>(t1 - t0).count();
    double mults = 2.0 * static_cast<double>(count) * iters;  // two lanes per pair
    return mults / secs;
}

std::string csv_num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"complex-variable hybrid state estimation toolkit"};
    app.require_subcommand(1);

    std::string network_path, measurements_path, placement_path, injections_path;
    std::string zero_injections = "on";
    cse::EstimatorConfig cfg;
    cse::NoiseSpec noise;
    std::string estimator = "cec";
    std::string out_path;
    std::string dump_matrix_path;
    std::string label;
    std::string preset_name = "118";
    std::string out_dir = ".";
    std::vector<double> load_mults;
    std::vector<std::string> estimator_list{"cec", "cne", "rec"};
    int trials = 200;
    std::uint64_t seed = 1;
    int threads = 0;
    std::size_t kb_count = 1 << 16;
    int kb_iters = 200;
    double stress_tolerance = 1e-7;

    auto add_network = [&](CLI::App* cmd) {
        cmd->add_option("--network", network_path, "network JSON file")->required();
        cmd->add_option("--zero-injections", zero_injections,
                        "treat flagged nodes as zero injections: on|off")
            ->check(CLI::IsMember({"on", "off"}));
    };
    auto add_noise = [&](CLI::App* cmd) {
        cmd->add_option("--scada-sigma-pct", noise.scada_sigma_pct);
        cmd->add_option("--pmu-mag-sigma-pct", noise.pmu_mag_sigma_pct);
        cmd->add_option("--pmu-angle-sigma-deg", noise.pmu_angle_sigma_deg);
        cmd->add_option("--voltage-full-scale", noise.voltage_full_scale);
    };

    auto* est = app.add_subcommand("estimate", "run one estimator on a measurement file");
    add_network(est);
    est->add_option("--measurements", measurements_path, "measurement JSONL file")
        ->required();
    est->add_option("--estimator", estimator, "cne|cec|rec")
        ->check(CLI::IsMember({"cne", "cec", "rec"}));
    est->add_option("--tolerance", cfg.tolerance, "convergence tolerance (per-unit)");
    est->add_option("--max-iterations", cfg.max_iterations);
    est->add_option("--out", out_path, "result JSON (stdout when omitted)");
    est->add_option("--dump-matrix", dump_matrix_path,
                    "write the final assembled system in coordinate text form");

    auto* sim = app.add_subcommand("simulate", "emit a simulated measurement file");
    add_network(sim);
    sim->add_option("--injections", injections_path, "injection profile JSON")
        ->required();
    sim->add_option("--placement", placement_path, "placement JSON")->required();
    sim->add_option("--seed", seed, "noise seed");
    add_noise(sim);
    sim->add_option("--out", out_path, "measurement JSONL (stdout when omitted)");

    auto* bench = app.add_subcommand("bench", "seeded Monte-Carlo estimator comparison");
    add_network(bench);
    bench->add_option("--injections", injections_path)->required();
    bench->add_option("--placement", placement_path)->required();
    bench->add_option("--trials", trials);
    bench->add_option("--seed", seed);
    bench->add_option("--tolerance", cfg.tolerance);
    bench->add_option("--max-iterations", cfg.max_iterations);
    bench->add_option("--threads", threads, "0 = hardware concurrency");
    bench->add_option("--estimators", estimator_list, "subset of cec cne rec");
    bench->add_option("--label", label, "row label (defaults to the network file stem)");
    add_noise(bench);
    bench->add_option("--out", out_path, "CSV output (stdout when omitted)");

    auto* stress = app.add_subcommand("stress", "load-multiplier stress sweep");
    add_network(stress);
    stress->add_option("--injections", injections_path)->required();
    stress->add_option("--placement", placement_path)->required();
    stress->add_option("--load-mult", load_mults, "load multipliers (>= 1)")
        ->required()
        ->expected(-1);
    stress->add_option("--seed", seed);
    stress->add_option("--tolerance", stress_tolerance);
    stress->add_option("--out", out_path, "CSV output (stdout when omitted)");

    auto* kb = app.add_subcommand("kernel-bench",
                                  "complex multiply throughput, scalar vs vectorized");
    kb->add_option("--count", kb_count, "pairs per pass");
    kb->add_option("--iters", kb_iters, "passes");

    auto* gen = app.add_subcommand("gen", "generate a synthetic fixture set");
    gen->add_option("--preset", preset_name, "118|1888|9241")
        ->check(CLI::IsMember({"118", "1888", "9241"}));
    gen->add_option("--out-dir", out_dir);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInputError;
    }
    const bool zi_on = zero_injections != "off";

    try {
        if (est->parsed()) {
            auto net = cse::Network::parse(read_file(network_path));
            auto y = cse::build_admittance(net);
            auto meas = cse::parse_measurements(read_file(measurements_path), net);
            auto cs = cse::make_constraint_spec(net, zi_on);
            cse::EstimationResult res;
            if (estimator == "cec")
                res = cse::run_cec(net, y, meas, cs, cfg);
            else if (estimator == "cne")
                res = cse::run_cne(net, y, meas, cs, cfg);
            else
                res = cse::run_rec(net, y, meas, cs, cfg);
            write_or_print(out_path, result_to_json(res, net).dump(2) + "\n");
            if (!dump_matrix_path.empty() && estimator != "rec") {
                cse::MeasurementSet used;
                for (const auto& m : meas)
                    if (m.kind != cse::MeasurementKind::ZeroInjectionPseudo ||
                        estimator == "cne")
                        used.push_back(m);
                auto mr = cse::build_measurement_rows(res.state, used, net, y);
                auto g = cse::assemble_gain(mr.w, mr.r, mr.Hx, mr.Hxbar,
                                            mr.self_conjugate);
                cse::KktSystem kkt;
                if (estimator == "cec") {
                    auto ce = cse::eval_constraints(res.state, cs, y);
                    kkt = cse::assemble_kkt(g, ce.s, ce.Jx, ce.Jxbar,
                                            ce.self_conjugate);
                } else {
                    kkt = cse::assemble_kkt(g, {}, cse::RowBlock{g.n, {}},
                                            cse::RowBlock{g.n, {}}, {});
                }
                std::ostringstream os;
                kkt.A.dump_coordinate(os);
                write_file(dump_matrix_path, os.str());
            }
            return res.converged ? kExitOk : kExitNoConvergence;
        }

        if (sim->parsed()) {
            auto net = cse::Network::parse(read_file(network_path));
            auto y = cse::build_admittance(net);
            auto prof = cse::parse_injections(read_file(injections_path), net);
            auto placement = cse::parse_placement(read_file(placement_path), net);
            auto pf = cse::solve_power_flow(net, y, prof.injections, prof.slack_voltage);
            if (!pf.converged) {
                std::cerr << "simulate: power flow did not converge\n";
                return kExitNoConvergence;
            }
            noise.seed = seed;
            auto simres = cse::simulate_measurements(pf.state, net, y, placement, noise,
                                                     zi_on);
            write_or_print(out_path, cse::serialize_measurements(simres.set, net));
            return kExitOk;
        }

        if (bench->parsed()) {
            auto net = cse::Network::parse(read_file(network_path));
            auto y = cse::build_admittance(net);
            auto prof = cse::parse_injections(read_file(injections_path), net);
            auto placement = cse::parse_placement(read_file(placement_path), net);
            cse::MonteCarloOptions opts;
            opts.trials = trials;
            opts.base_seed = seed;
            opts.threads = threads;
            opts.zero_injections = zi_on;
            opts.noise = noise;
            opts.config = cfg;
            opts.with_cec = opts.with_cne = opts.with_rec = false;
            for (const auto& e : estimator_list) {
                if (e == "cec") opts.with_cec = true;
                else if (e == "cne") opts.with_cne = true;
                else if (e == "rec") opts.with_rec = true;
                else throw cse::ParseError("unknown estimator '" + e + "'");
            }
            auto rep = cse::monte_carlo(net, y, placement, prof.injections,
                                        prof.slack_voltage, opts);
            if (label.empty())
                label = std::filesystem::path(network_path).stem().string();

            std::ostringstream os;
            os << "# matrix size, nonzeros, iterations and time per run (mean over "
               << rep.trials << " trials)\n";
            os << "net,estimator,matrix_size,matrix_nz,iterations,time_ms,suf,failures\n";
            auto row = [&](const char* name, const cse::EstimatorAggregate& a,
                           double suf) {
                if (!a.enabled) return;
                os << label << ',' << name << ',' << a.matrix_size << ',' << a.matrix_nz
                   << ',' << csv_num(a.mean_iterations) << ',' << csv_num(a.mean_time_ms)
                   << ',' << (suf > 0.0 ? csv_num(suf) : "") << ',' << a.failures
                   << '\n';
            };
            row("cne", rep.cne, 0.0);
            row("cec", rep.cec, rep.suf);
            row("rec", rep.rec, 0.0);
            os << "# accuracy indices (mean over trials, ratios relative to cec)\n";
            os << "net,index,cec,cne,pif_cne,rec,pif_rec\n";
            os << label << ",xi_z," << csv_num(rep.cec.mean_xi) << ','
               << csv_num(rep.cne.mean_xi) << ',' << csv_num(rep.pif_cne_xi) << ','
               << csv_num(rep.rec.mean_xi) << ',' << csv_num(rep.pif_rec_xi) << '\n';
            os << label << ",sigma_x2," << csv_num(rep.cec.mean_sigma2) << ','
               << csv_num(rep.cne.mean_sigma2) << ',' << csv_num(rep.pif_cne_sigma2)
               << ',' << csv_num(rep.rec.mean_sigma2) << ','
               << csv_num(rep.pif_rec_sigma2) << '\n';
            write_or_print(out_path, os.str());
            return kExitOk;
        }

        if (stress->parsed()) {
            auto net = cse::Network::parse(read_file(network_path));
            auto y = cse::build_admittance(net);
            auto prof = cse::parse_injections(read_file(injections_path), net);
            auto placement = cse::parse_placement(read_file(placement_path), net);
            cse::StressOptions opts;
            opts.base_seed = seed;
            opts.zero_injections = zi_on;
            opts.config.tolerance = stress_tolerance;
            auto rows = cse::stress_sweep(net, y, placement, prof.injections,
                                          prof.slack_voltage, load_mults, opts);
            std::ostringstream os;
            os << "# load multiplier sweep\n";
            os << "mult,feasible,min_v_node,min_v,iterations_cec,iterations_rec\n";
            const cse::StressRow* edge = nullptr;
            for (const auto& r : rows) {
                os << csv_num(r.multiplier) << ',' << (r.feasible ? 1 : 0) << ','
                   << r.min_v_node << ',' << csv_num(r.min_v) << ','
                   << r.iterations_cec << ',' << r.iterations_rec << '\n';
                if (r.feasible) edge = &r;
            }
            if (edge) {
                os << "# step norms per iteration at multiplier " << edge->multiplier
                   << "\n";
                os << "iteration,cec,rec\n";
                std::size_t rows_n =
                    std::max(edge->trace_cec.size(), edge->trace_rec.size());
                for (std::size_t i = 0; i < rows_n; ++i) {
                    os << (i + 1) << ',';
                    if (i < edge->trace_cec.size()) os << csv_num(edge->trace_cec[i]);
                    os << ',';
                    if (i < edge->trace_rec.size()) os << csv_num(edge->trace_rec[i]);
                    os << '\n';
                }
            }
            write_or_print(out_path, os.str());
            return kExitOk;
        }

        if (kb->parsed()) {
            double scalar = run_kernel_bench_path(false, kb_count, kb_iters);
            std::cout << "complex multiply-accumulate throughput\n";
            std::cout << "  scalar:     " << scalar / 1e6 << " Mops/s\n";
            if (cse::kernels::vectorized()) {
                double vec = run_kernel_bench_path(true, kb_count, kb_iters);
                std::cout << "  vectorized: " << vec / 1e6 << " Mops/s  ("
                          << vec / scalar << "x)\n";
            } else {
                std::cout << "  vectorized path not compiled in on this build\n";
            }
            return kExitOk;
        }

        if (gen->parsed()) {
            auto preset = cse::fixture_preset(preset_name);
            auto fx = cse::make_synthetic_fixture(preset.spec);
            auto dir = std::filesystem::path(out_dir);
            std::filesystem::create_directories(dir);
            write_file((dir / ("net_" + preset_name + ".json")).string(),
                       fx.net.to_json().dump() + "\n");
            write_file((dir / ("injections_" + preset_name + ".json")).string(),
                       cse::injections_to_json(fx.injections, fx.net, fx.slack_voltage)
                               .dump() +
                           "\n");
            for (const auto& pc : preset.placements) {
                auto p = cse::make_placement_kind(fx.net, pc.kind, pc.pmu_v, pc.pmu_i);
                std::string name = std::string("placement_") + preset_name + "_" +
                                   pc.kind + ".json";
                write_file((dir / name).string(),
                           cse::placement_to_json(p, fx.net).dump() + "\n");
            }
            std::cout << "wrote fixture set '" << preset_name << "' to " << out_dir
                      << "\n";
            return kExitOk;
        }
    } catch (const cse::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInputError;
    }
    return kExitOk;
}
