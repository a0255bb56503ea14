#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rompc/baselines.hpp"
#include "rompc/benchmark.hpp"
#include "rompc/bounding.hpp"
#include "rompc/error.hpp"
#include "rompc/io.hpp"
#include "rompc/lti.hpp"
#include "rompc/mpc.hpp"
#include "rompc/reduction.hpp"
#include "rompc/synthesis.hpp"

namespace rompc {

inline constexpr const char* version = "1.0.0";

/// Plant, reduced model and OCP data derived from a configuration.
struct Instance {
    BenchmarkConfig cfg;
    LtiSystem sys;
    ReducedModel rom;
    ErrorDynamics err;
    ProblemData data;
    int N = 0;
};

inline Instance make_instance(const BenchmarkConfig& cfg)
{
    cfg.validate();
    Instance inst;
    inst.cfg = cfg;
    inst.sys = build_benchmark_model(cfg);
    const auto [V, W] = modal_lumped_projection(inst.sys, cfg.n_modes);
    inst.rom = petrov_galerkin_reduce(inst.sys, V, W);
    inst.err = error_dynamics(inst.sys, inst.rom);
    inst.N = cfg.steps();
    const int nz = inst.sys.outputs();
    const int nu = inst.sys.inputs();
    for (int i = 0; i < nz; ++i) {
        inst.data.output_constraints.push_back({VectorXd::Unit(nz, i), -cfg.z_max});
    }
    inst.data.u_min = VectorXd::Constant(nu, cfg.u_min);
    inst.data.u_max = VectorXd::Constant(nu, cfg.u_max);
    inst.data.z_ref = SampledSignal::constant(VectorXd::Constant(nz, cfg.z_ref));
    inst.data.input_weight = cfg.input_weight;
    inst.data.tightening_factor = cfg.tightening_factor;
    return inst;
}

inline OcpSpec make_ocp_spec(const Instance& inst, OcpMode mode, std::optional<RobustPredictor> pred = std::nullopt)
{
    OcpSpec spec;
    spec.rom = inst.rom;
    spec.predictor = std::move(pred);
    spec.data = inst.data;
    spec.dt = inst.cfg.dt;
    spec.N = inst.N;
    spec.mode = mode;
    spec.scp_passes = inst.cfg.scp_passes;
    spec.delta_floor = inst.cfg.delta_floor;
    return spec;
}

inline LinesearchObjective objective_of(const BenchmarkConfig& cfg)
{
    return cfg.linesearch_objective == "gamma" ? LinesearchObjective::gamma
                                               : LinesearchObjective::gamma_over_sqrt_lambda;
}

/// The configured "a:b:n" grid, or the default grid inside (0, 2 |abscissa|).
inline std::vector<double> lambda_grid_for(const BenchmarkConfig& cfg, double abscissa)
{
    return cfg.lambda_grid.empty() ? default_lambda_grid(abscissa, cfg.lambda_count) : io::parse_grid(cfg.lambda_grid);
}

/// Per-channel peaks of [x_r; u] along a rollout, floored.
inline VectorXd rollout_scales(const OcpSolution& sol, double floor)
{
    const auto nr = sol.xr.rows();
    const auto nu = sol.u.values.rows();
    VectorXd s(nr + nu);
    for (Eigen::Index i = 0; i < nr; ++i) {
        s(i) = std::max(floor, sol.xr.row(i).cwiseAbs().maxCoeff());
    }
    for (Eigen::Index i = 0; i < nu; ++i) {
        s(nr + i) = std::max(floor, sol.u.values.row(i).cwiseAbs().maxCoeff());
    }
    return s;
}

struct SynthesisResult {
    BoundingFilter filter;
    GainCertificate cert;
};

/**
 * @brief Builds the high-pass bounding filter and runs the filtered lambda linesearch.
 *
 * Unset scales come from the naive OCP rollout; an unset omega_c is ten times
 * the reduced model's decay rate.
 */
inline SynthesisResult synthesize_filtered(const Instance& inst, const SynthesisOptions& opt = {})
{
    const auto& cfg = inst.cfg;
    VectorXd scales;
    if (cfg.scales.empty()) {
        const auto naive = solve_ocp(make_ocp_spec(inst, OcpMode::naive));
        if (naive.status != sdp::Status::optimal) {
            throw InfeasibleError("synthesize: naive OCP for the filter scales is not solvable");
        }
        scales = rollout_scales(naive, cfg.scale_floor);
    } else {
        scales = Eigen::Map<const VectorXd>(cfg.scales.data(), static_cast<Eigen::Index>(cfg.scales.size()));
    }
    const double omega_c = cfg.omega_c > 0.0 ? cfg.omega_c : 10.0 * std::abs(spectral_abscissa(inst.rom.Ar));
    SynthesisResult out;
    out.filter = build_highpass_filter(inst.rom, omega_c, scales, inst.sys.disturbances());
    const auto aug = build_augmented_system(inst.err, out.filter);
    const auto grid = lambda_grid_for(cfg, spectral_abscissa(aug.A));
    out.cert = lambda_linesearch(aug, grid, objective_of(cfg), opt);
    return out;
}

/// ZOH input drawn uniformly from the input box on every step.
inline SampledSignal random_admissible_input(std::mt19937_64& rng, const VectorXd& u_min, const VectorXd& u_max,
                                             double dt, int N)
{
    MatrixXd v(u_min.size(), N);
    for (int k = 0; k < N; ++k) {
        for (Eigen::Index i = 0; i < u_min.size(); ++i) {
            std::uniform_real_distribution<double> dist(u_min(i), u_max(i));
            v(i, k) = dist(rng);
        }
    }
    return SampledSignal::uniform(dt, v);
}

/// ZOH disturbance with ||w(t)|| <= wbar on every step.
inline SampledSignal random_disturbance(std::mt19937_64& rng, int channels, double wbar, double dt, int N)
{
    if (channels == 0 || wbar == 0.0) {
        return SampledSignal::zeros(channels);
    }
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> radius(0.0, 1.0);
    MatrixXd v(channels, N);
    for (int k = 0; k < N; ++k) {
        VectorXd d(channels);
        for (int i = 0; i < channels; ++i) {
            d(i) = gauss(rng);
        }
        const double nrm = d.norm();
        v.col(k) = nrm > 0.0 ? VectorXd(d * (wbar * radius(rng) / nrm)) : VectorXd::Zero(channels);
    }
    return SampledSignal::uniform(dt, v);
}

struct RolloutReport {
    double max_z = 0.0;
    double max_violation = 0.0; ///< max_j max_t g_j(z(t))
    double terminal_error = 0.0; ///< ||z(T) - z_ref||_inf
    double realized_cost = 0.0;
    VectorXd times;
    MatrixXd z;
};

/// Full-order rollout under u on the grid dt / refine, with the realized cost on the OCP grid.
inline RolloutReport rollout_report(const Instance& inst, const SampledSignal& u, int refine)
{
    const double T = inst.N * inst.cfg.dt;
    const auto traj = simulate(inst.sys, u, inst.cfg.dt / refine, T);
    RolloutReport rep;
    rep.times = traj.times;
    rep.z = traj.outputs;
    rep.max_z = traj.outputs.maxCoeff();
    rep.max_violation = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < traj.times.size(); ++k) {
        for (const auto& g : inst.data.output_constraints) {
            rep.max_violation = std::max(rep.max_violation, g(traj.outputs.col(k)));
        }
    }
    const auto last = traj.times.size() - 1;
    rep.terminal_error = (traj.outputs.col(last) - inst.data.z_ref.at(T)).cwiseAbs().maxCoeff();
    for (int k = 0; k < inst.N; ++k) {
        const double t = k * inst.cfg.dt;
        const VectorXd zk = traj.outputs.col(static_cast<Eigen::Index>(k) * refine);
        rep.realized_cost += inst.cfg.dt * ((zk - inst.data.z_ref.at(t)).cwiseAbs().maxCoeff() +
                                            inst.data.input_weight * u.at(t).cwiseAbs().maxCoeff());
    }
    return rep;
}

/**
 * @brief Stage runner writing artifacts into one run directory.
 *
 * Every stage prints one JSON summary line with its wall-clock time and
 * refreshes manifest.json.
 */
class Pipeline {
public:
    Pipeline(BenchmarkConfig cfg, std::filesystem::path out, std::ostream& log = std::cout)
        : inst_(make_instance(cfg)), out_(std::move(out)), log_(log)
    {
        std::filesystem::create_directories(out_);
        const auto manifest = out_ / "manifest.json";
        if (std::filesystem::exists(manifest)) {
            const auto m = io::read_json(manifest);
            if (m.value("config_hash", "") == io::config_hash(inst_.cfg) && m.contains("timings")) {
                timings_ = m.at("timings");
            }
        }
        io::write_json(out_ / "config.json", io::config_to_json(inst_.cfg));
        export_results();
    }

    [[nodiscard]] const Instance& instance() const { return inst_; }
    [[nodiscard]] const std::filesystem::path& directory() const { return out_; }

    io::json synthesize()
    {
        return run_stage("synthesize", [&] {
            const auto res = synthesize_filtered(inst_);
            io::write_json(out_ / "certificate.json",
                           {{"filter", io::filter_to_json(res.filter)}, {"certificate", io::certificate_to_json(res.cert)}});
            write_profile(out_ / "lambda_profile.csv", res.cert);
            return io::json{{"lambda", res.cert.lambda},
                            {"gamma", res.cert.gamma},
                            {"omega_c", res.filter.omega_c},
                            {"max_residual", res.cert.max_residual()}};
        });
    }

    io::json solve(OcpMode mode)
    {
        return run_stage(std::string("solve-") + to_string(mode), [&] {
            std::optional<RobustPredictor> pred;
            if (mode == OcpMode::robust) {
                pred = load_predictor();
            }
            const auto sol = solve_ocp(make_ocp_spec(inst_, mode, pred));
            write_solution(mode, sol);
            if (sol.status != sdp::Status::optimal) {
                throw InfeasibleError(std::string("solve: ") + to_string(mode) + " OCP is " +
                                      sdp::to_string(sol.status));
            }
            return io::json{{"J_star", sol.J}, {"passes", sol.passes}, {"solve_seconds", sol.solve_seconds}};
        });
    }

    io::json simulate_solution(OcpMode mode)
    {
        return run_stage(std::string("simulate-") + to_string(mode), [&] {
            const auto sol = load_solution(mode);
            const auto& cfg = inst_.cfg;
            const double T = inst_.N * cfg.dt;
            const auto rep = rollout_report(inst_, sol.u, cfg.check_refine);
            io::json summary{{"mode", to_string(mode)},
                             {"max_z", rep.max_z},
                             {"max_violation", rep.max_violation},
                             {"constraint_satisfied", rep.max_violation <= 1e-6},
                             {"terminal_error", rep.terminal_error},
                             {"realized_cost", rep.realized_cost},
                             {"J_star", sol.J},
                             {"cost_bounded", rep.realized_cost <= sol.J + 1e-6 * (1.0 + std::abs(sol.J))}};
            const auto nominal = simulate(inst_.rom.as_system(), sol.u, cfg.dt / cfg.check_refine, T);
            MatrixXd table(rep.times.size(), 3);
            table.col(0) = rep.times;
            table.col(1) = rep.z.row(0).transpose();
            table.col(2) = nominal.outputs.row(0).transpose();
            std::vector<std::string> header{"t", "z", "z_r"};
            if (mode == OcpMode::robust) {
                const auto pred = load_predictor();
                const auto tube = simulate_bound(pred, sol.u, cfg.dt, T, cfg.check_refine);
                table.conservativeResize(Eigen::NoChange, 4);
                table.col(3) = tube.delta_z;
                header.emplace_back("delta_z");
                const auto own = containment_check(inst_.sys, pred, sol.u, SampledSignal::zeros(inst_.sys.disturbances()),
                                                   cfg.dt, T, cfg.check_refine);
                double worst = own.max_margin;
                std::mt19937_64 rng(cfg.seed);
                for (int i = 0; i < cfg.random_inputs; ++i) {
                    const auto u = random_admissible_input(rng, inst_.data.u_min, inst_.data.u_max, cfg.dt, inst_.N);
                    const auto w = random_disturbance(rng, inst_.sys.disturbances(), cfg.wbar, cfg.dt, inst_.N);
                    worst = std::max(worst, containment_check(inst_.sys, pred, u, w, cfg.dt, T, cfg.check_refine).max_margin);
                }
                summary["containment_margin_solution"] = own.max_margin;
                summary["containment_margin_worst"] = worst;
                summary["random_inputs"] = cfg.random_inputs;
            }
            io::write_csv(out_ / (std::string("simulate_") + to_string(mode) + ".csv"), header, table);
            io::write_json(out_ / (std::string("simulate_") + to_string(mode) + ".json"), summary);
            return summary;
        });
    }

    io::json compare(const std::vector<BoundMethod>& methods = {BoundMethod::uniform, BoundMethod::input_dependent,
                                                                 BoundMethod::peak, BoundMethod::peak_filter})
    {
        return run_stage("compare", [&] {
            const auto sol = load_solution(OcpMode::robust);
            const auto& cfg = inst_.cfg;
            ComparisonInputs in;
            in.sys = &inst_.sys;
            in.rom = &inst_.rom;
            in.err = &inst_.err;
            in.u_min = inst_.data.u_min;
            in.u_max = inst_.data.u_max;
            in.wbar = cfg.wbar;
            in.dt = cfg.dt;
            in.N = inst_.N;
            in.methods = methods;
            const auto wants = [&](BoundMethod m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
            const double abscissa = spectral_abscissa(inst_.err.A);
            io::json notes = io::json::object();
            if (wants(BoundMethod::peak_filter)) {
                in.peak_filter = load_predictor();
            }
            if (wants(BoundMethod::peak)) {
                try {
                    in.peak = screened_peak_certificate(inst_.err, lambda_grid_for(cfg, abscissa), objective_of(cfg));
                    io::write_json(out_ / "certificate_peak.json", io::certificate_to_json(*in.peak));
                } catch (const Error& e) {
                    notes["peak"] = e.what();
                }
            }
            if (wants(BoundMethod::input_dependent)) {
                try {
                    in.input_dependent = lyapunov_error_bound(inst_.err, cfg.lambda_l_factor * 2.0 * std::abs(abscissa));
                    io::write_json(out_ / "certificate_inputdep.json", io::certificate_to_json(*in.input_dependent));
                } catch (const Error& e) {
                    notes["inputdep"] = e.what();
                }
            }
            const auto cmp = compare_bounds(in, sol.u);
            write_comparison(cmp, notes);
            io::json summary = io::json::object();
            for (const auto& m : cmp.methods) {
                summary[std::string("peak_") + to_string(m.method)] = m.available ? io::json(m.peak) : io::json(nullptr);
            }
            return summary;
        });
    }

    /// All stages in order; infeasibility of a stage is reported after the remaining stages that can still run.
    io::json benchmark()
    {
        io::json all = io::json::object();
        all["synthesize"] = synthesize();
        std::optional<InfeasibleError> infeasible;
        for (OcpMode mode : {OcpMode::naive, OcpMode::robust}) {
            try {
                all[std::string("solve_") + to_string(mode)] = solve(mode);
                all[std::string("simulate_") + to_string(mode)] = simulate_solution(mode);
            } catch (const InfeasibleError& e) {
                infeasible = e;
            }
        }
        if (infeasible) {
            throw *infeasible;
        }
        all["compare"] = compare();
        return all;
    }

    /// Rewrites manifest.json from the directory contents.
    void export_results()
    {
        io::json files = io::json::array();
        std::vector<std::filesystem::path> paths;
        for (const auto& entry : std::filesystem::directory_iterator(out_)) {
            if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
                paths.push_back(entry.path());
            }
        }
        std::sort(paths.begin(), paths.end());
        for (const auto& p : paths) {
            files.push_back({{"name", p.filename().string()}, {"hash", io::file_hash(p)}});
        }
        io::json manifest{{"config_hash", io::config_hash(inst_.cfg)},
                          {"seed", inst_.cfg.seed},
                          {"versions",
                           {{"rompc", version},
                            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                          "." + std::to_string(EIGEN_MINOR_VERSION)},
                            {"compiler", compiler_id()}}},
                          {"timings", timings_},
                          {"files", files}};
        io::write_json(out_ / "manifest.json", manifest);
    }

private:
    template <class F>
    io::json run_stage(const std::string& name, F&& body)
    {
        const auto t0 = std::chrono::steady_clock::now();
        const auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
        io::json line{{"stage", name}};
        try {
            auto result = body();
            line["status"] = "ok";
            line["seconds"] = seconds();
            line.update(result);
            finish(name, line);
            return result;
        } catch (const InfeasibleError& e) {
            line["status"] = "infeasible";
            line["error"] = e.what();
            line["seconds"] = seconds();
            finish(name, line);
            throw;
        } catch (const std::exception& e) {
            line["status"] = "error";
            line["error"] = e.what();
            line["seconds"] = seconds();
            finish(name, line);
            throw;
        }
    }

    void finish(const std::string& name, const io::json& line)
    {
        timings_[name] = line.at("seconds");
        log_ << line.dump() << std::endl;
        export_results();
    }

    static std::string compiler_id()
    {
#if defined(__clang__)
        return "clang " __clang_version__;
#elif defined(__GNUC__)
        return "gcc " + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__) + "." +
               std::to_string(__GNUC_PATCHLEVEL__);
#else
        return "unknown";
#endif
    }

    [[nodiscard]] std::filesystem::path require_artifact(const std::string& file, const char* producer) const
    {
        const auto p = out_ / file;
        if (!std::filesystem::exists(p)) {
            throw Error("missing artifact " + p.string() + " (run '" + producer + "' first)");
        }
        return p;
    }

    [[nodiscard]] RobustPredictor load_predictor() const
    {
        const auto j = io::read_json(require_artifact("certificate.json", "synthesize"));
        const auto filter = io::filter_from_json(j.at("filter"));
        const auto cert = io::certificate_from_json(j.at("certificate"));
        const auto aug = build_augmented_system(inst_.err, filter);
        const auto check = check_certificate(cert, aug);
        if (!check.pass) {
            throw NumericalError("certificate.json does not pass the residual check for this configuration");
        }
        return make_robust_predictor(inst_.sys, inst_.rom, filter, cert, inst_.cfg.wbar);
    }

    void write_solution(OcpMode mode, const OcpSolution& sol) const
    {
        const std::string stem = std::string("ocp_") + to_string(mode);
        io::json u = io::json::array();
        for (Eigen::Index k = 0; k < sol.u.values.cols(); ++k) {
            u.push_back(io::vector_to_json(sol.u.values.col(k)));
        }
        io::write_json(out_ / (stem + ".json"), {{"mode", to_string(mode)},
                                                 {"status", sdp::to_string(sol.status)},
                                                 {"J_star", std::isfinite(sol.J) ? io::json(sol.J) : io::json(nullptr)},
                                                 {"passes", sol.passes},
                                                 {"pass_costs", sol.pass_costs},
                                                 {"solve_seconds", sol.solve_seconds},
                                                 {"dt", inst_.cfg.dt},
                                                 {"u", u}});
        if (sol.status != sdp::Status::optimal) {
            return;
        }
        const auto K = sol.times.size();
        MatrixXd table(K, 6);
        table.col(0) = sol.times;
        for (Eigen::Index k = 0; k < K; ++k) {
            table(k, 1) = sol.u.at(sol.times(k))(0);
        }
        table.col(2) = sol.zr.row(0).transpose();
        // The naive program carries no tube; its columns are written as zeros.
        const auto or_zero = [K](const VectorXd& v) { return v.size() == K ? v : VectorXd::Zero(K); };
        table.col(3) = or_zero(sol.delta_z);
        table.col(4) = or_zero(sol.delta_chi);
        table.col(5) = or_zero(sol.s);
        io::write_csv(out_ / (stem + ".csv"), {"t", "u", "z_r", "delta_z", "delta_chi", "s"}, table);
    }

    struct StoredSolution {
        SampledSignal u;
        double J = 0.0;
    };

    [[nodiscard]] StoredSolution load_solution(OcpMode mode) const
    {
        const std::string file = std::string("ocp_") + to_string(mode) + ".json";
        const auto j = io::read_json(require_artifact(file, (std::string("solve --mode ") + to_string(mode)).c_str()));
        if (j.at("status").get<std::string>() != "optimal") {
            throw InfeasibleError(file + " holds no feasible solution");
        }
        const auto& u = j.at("u");
        MatrixXd v(inst_.sys.inputs(), static_cast<Eigen::Index>(u.size()));
        for (std::size_t k = 0; k < u.size(); ++k) {
            v.col(static_cast<Eigen::Index>(k)) = io::vector_from_json(u.at(k), "u");
        }
        return {SampledSignal::uniform(j.at("dt").get<double>(), v), j.at("J_star").get<double>()};
    }

    static void write_profile(const std::filesystem::path& path, const GainCertificate& cert)
    {
        MatrixXd table(static_cast<Eigen::Index>(cert.grid_profile.size()), 2);
        for (std::size_t i = 0; i < cert.grid_profile.size(); ++i) {
            table(static_cast<Eigen::Index>(i), 0) = cert.grid_profile[i].lambda;
            table(static_cast<Eigen::Index>(i), 1) = cert.grid_profile[i].gamma;
        }
        io::write_csv(path, {"lambda", "gamma"}, table);
    }

    void write_comparison(const BoundComparison& cmp, const io::json& notes) const
    {
        const auto K = cmp.times.size();
        std::vector<std::string> header{"t"};
        MatrixXd table(K, 1);
        table.col(0) = cmp.times;
        io::json summary{{"methods", io::json::object()}};
        for (const auto& m : cmp.methods) {
            const std::string name = to_string(m.method);
            header.push_back("bound_" + name);
            table.conservativeResize(Eigen::NoChange, table.cols() + 1);
            table.col(table.cols() - 1) =
                m.available ? m.bound : VectorXd::Constant(K, std::numeric_limits<double>::quiet_NaN());
            io::json entry{{"available", m.available}};
            if (m.available) {
                entry["peak"] = m.peak;
                entry["terminal"] = m.terminal;
                entry["sound"] = (m.bound - cmp.true_error).minCoeff() >= -1e-6;
            } else {
                entry["note"] = notes.contains(name) ? notes.at(name).get<std::string>() : m.note;
            }
            summary["methods"][name] = entry;
        }
        header.emplace_back("true_error");
        table.conservativeResize(Eigen::NoChange, table.cols() + 1);
        table.col(table.cols() - 1) = cmp.true_error;
        io::write_csv(out_ / "compare.csv", header, table);
        const auto finite_or_null = [](double v) { return std::isfinite(v) ? io::json(v) : io::json(nullptr); };
        summary["ratio_uniform_over_peakfilter"] = finite_or_null(cmp.ratio_uniform_over_filter);
        summary["ratio_inputdep_over_peakfilter"] = finite_or_null(cmp.ratio_inputdep_over_filter);
        io::write_json(out_ / "compare.json", summary);
    }

    Instance inst_;
    std::filesystem::path out_;
    std::ostream& log_;
    io::json timings_ = io::json::object();
};

} // namespace rompc
