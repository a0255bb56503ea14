// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero if any fails.
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "support.hpp"

using namespace rompc;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Line {
    int id = 0;
    bool pass = false;
    std::string detail;
};

std::vector<Line> lines;
int certificates_checked = 0;
int certificates_failed = 0;

void report(int id, bool pass, const std::string& detail)
{
    lines.push_back({id, pass, detail});
    std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

void record_certificate(const CertificateCheck& c)
{
    ++certificates_checked;
    if (!c.pass) {
        ++certificates_failed;
    }
}

std::string fmt(double v)
{
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

MatrixXd random_basis(std::mt19937_64& rng, int n, int r)
{
    Eigen::HouseholderQR<MatrixXd> qr(random_matrix(rng, n, r));
    return qr.householderQ() * MatrixXd::Identity(n, r);
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Drops wall-clock fields so the remaining JSON holds only numerics.
io::json strip_timings(io::json j)
{
    if (j.is_object()) {
        io::json out = io::json::object();
        for (auto& [k, v] : j.items()) {
            if (k.find("seconds") == std::string::npos) {
                out[k] = strip_timings(v);
            }
        }
        return out;
    }
    return j;
}

void criterion_1()
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> dim(2, 20);
        const int n = dim(rng);
        const auto sys = random_system(rng, n, 2, 1, 2);
        const MatrixXd V = random_basis(rng, n, std::max(1, n / 3));
        const auto rom = petrov_galerkin_reduce(sys, V, V);
        const auto err = error_dynamics(sys, rom);
        const auto u = random_input(rng, 2, 20, 0.25, 1.0);
        const auto w = random_input(rng, 1, 20, 0.25, 1.0);
        const auto direct = simulate(sys, u, w, 0.25, 5.0);
        const auto rec = reconstruct_full_output(sys, rom, err, u, w, 0.25, 5.0);
        const double peak = direct.outputs.cwiseAbs().maxCoeff();
        worst = std::max(worst, (direct.outputs - rec.z).cwiseAbs().maxCoeff() / (1.0 + peak));
    }
    const auto inst = make_instance(BenchmarkConfig{});
    const auto u = random_input(rng, inst.sys.inputs(), 150, 2.0, 100.0);
    const auto w = SampledSignal::zeros(inst.sys.disturbances());
    const auto direct = simulate(inst.sys, u, w, 2.0, 300.0);
    const auto rec = reconstruct_full_output(inst.sys, inst.rom, inst.err, u, w, 2.0, 300.0);
    const double peak = direct.outputs.cwiseAbs().maxCoeff();
    worst = std::max(worst, (direct.outputs - rec.z).cwiseAbs().maxCoeff() / (1.0 + peak));
    const double secs = since(t0);
    report(1, worst <= 1e-8 && secs < 10.0, "worst relative mismatch " + fmt(worst) + ", " + fmt(secs) + " s");
}

void criterion_2()
{
    const auto t0 = Clock::now();
    const auto err = []() {
        ErrorDynamics e;
        e.A = MatrixXd::Constant(1, 1, -1.0);
        e.Be = MatrixXd::Ones(1, 1);
        e.C = MatrixXd::Ones(1, 1);
        e.e0 = VectorXd::Zero(1);
        e.n_u = 1;
        return e;
    }();
    const auto at_one = peak_gain_lmi(err, 1.0);
    record_certificate(check_certificate(at_one, err));
    bool ok = at_one.gamma >= 0.999 && at_one.gamma <= 1.001;
    double worst = 0.0;
    for (double l : linspace(0.2, 1.8, 9)) {
        const auto c = peak_gain_lmi(err, l);
        record_certificate(check_certificate(c, err));
        const double exact = 1.0 / std::sqrt(l * (2.0 - l));
        worst = std::max(worst, std::abs(c.gamma - exact) / exact);
    }
    ok = ok && worst <= 5e-3;
    const double secs = since(t0);
    report(2, ok && secs < 5.0,
           "gamma(1) = " + fmt(at_one.gamma) + ", profile error " + fmt(worst) + ", " + fmt(secs) + " s");
}

void criterion_4()
{
    std::mt19937_64 rng(404);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        std::uniform_int_distribution<int> dim(2, 8);
        const auto err = random_error(rng, dim(rng), 2, 1);
        const double lambda = 0.5 * std::abs(spectral_abscissa(err.A));
        const auto plain = peak_gain_lmi(err, lambda);
        const auto aug = build_augmented_system(err, identity_filter(err.drive_size(), err.n_w));
        const auto filtered = filtered_peak_gain_lmi(aug, lambda);
        record_certificate(check_certificate(plain, err));
        record_certificate(check_certificate(filtered, aug));
        worst = std::max(worst, std::abs(filtered.gamma - plain.gamma) / plain.gamma);
    }
    report(4, worst <= 1e-6, "worst relative gamma gap " + fmt(worst));
}

struct RunFiles {
    fs::path dir;
    io::json manifest;
    bool complete = false;
    std::string error;
};

RunFiles run_benchmark(const fs::path& dir)
{
    fs::remove_all(dir);
    RunFiles r;
    r.dir = dir;
    try {
        Pipeline p(BenchmarkConfig{}, dir, std::cerr);
        p.benchmark();
        r.complete = true;
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    if (fs::exists(dir / "manifest.json")) {
        r.manifest = io::read_json(dir / "manifest.json");
    }
    return r;
}

double timing(const RunFiles& r, const char* stage)
{
    const auto& t = r.manifest.at("timings");
    return t.contains(stage) ? t.at(stage).get<double>() : std::numeric_limits<double>::quiet_NaN();
}

void criteria_3_and_5_to_9(const RunFiles& run)
{
    const auto inst = make_instance(BenchmarkConfig{});
    bool cert_ok = false;
    GainCertificate filtered;
    BoundingFilter filter;
    if (fs::exists(run.dir / "certificate.json")) {
        const auto j = io::read_json(run.dir / "certificate.json");
        filtered = io::certificate_from_json(j.at("certificate"));
        filter = io::filter_from_json(j.at("filter"));
        const auto check = check_certificate(filtered, build_augmented_system(inst.err, filter));
        record_certificate(check);
        cert_ok = check.pass;
    }
    std::optional<GainCertificate> peak;
    if (fs::exists(run.dir / "certificate_peak.json")) {
        peak = io::certificate_from_json(io::read_json(run.dir / "certificate_peak.json"));
        record_certificate(check_certificate(*peak, inst.err));
    }
    if (fs::exists(run.dir / "certificate_inputdep.json")) {
        record_certificate(check_certificate(io::certificate_from_json(io::read_json(run.dir / "certificate_inputdep.json")),
                                             inst.err));
    }

    // 5: tube soundness on the robust input and the random admissible inputs.
    if (cert_ok && fs::exists(run.dir / "simulate_robust.json")) {
        const auto s = io::read_json(run.dir / "simulate_robust.json");
        const double margin = std::max(s.at("containment_margin_solution").get<double>(),
                                       s.at("containment_margin_worst").get<double>());
        const double secs = timing(run, "simulate-robust");
        report(5, margin <= 1e-6 && secs < 60.0,
               "max(|z - z_r| - delta_z) = " + fmt(margin) + " over " + std::to_string(s.at("random_inputs").get<int>()) +
                   " random inputs plus the robust input, " + fmt(secs) + " s");
    } else {
        report(5, false, "no robust simulation available: " + run.error);
    }

    // 6: robust closed loop on the full-order plant.
    if (fs::exists(run.dir / "simulate_robust.json") && fs::exists(run.dir / "simulate_naive.json")) {
        const auto r = io::read_json(run.dir / "simulate_robust.json");
        const auto n = io::read_json(run.dir / "simulate_naive.json");
        double total = 0.0;
        for (const char* st : {"synthesize", "solve-naive", "solve-robust", "simulate-naive", "simulate-robust"}) {
            total += timing(run, st);
        }
        const double z_max = r.at("max_z").get<double>();
        const double terminal = r.at("terminal_error").get<double>();
        const bool cost = r.at("cost_bounded").get<bool>();
        const double naive_z = n.at("max_z").get<double>();
        const bool ok = z_max <= 1.0 + 1e-6 && terminal <= 0.1 && cost && naive_z > 1.0 && total < 600.0;
        report(6, ok,
               "robust max z " + fmt(z_max) + ", |z(T) - 1| " + fmt(terminal) + ", cost bounded " +
                   (cost ? "yes" : "no") + ", naive max z " + fmt(naive_z) + ", " + fmt(total) + " s");
    } else {
        report(6, false, "pipeline incomplete: " + run.error);
    }

    // 7: bound ordering and magnitudes.
    if (fs::exists(run.dir / "compare.csv") && fs::exists(run.dir / "compare.json")) {
        const auto table = io::read_csv(run.dir / "compare.csv");
        const auto col = [&](const std::string& name) -> VectorXd {
            for (std::size_t i = 0; i < table.header.size(); ++i) {
                if (table.header[i] == name) {
                    return table.data.col(static_cast<Eigen::Index>(i));
                }
            }
            return VectorXd();
        };
        const VectorXd pf = col("bound_peakfilter");
        const VectorXd pk = col("bound_peak");
        const VectorXd id = col("bound_inputdep");
        const VectorXd un = col("bound_uniform");
        bool ok = pf.size() && pk.size() && id.size() && un.size() && pf.allFinite() && pk.allFinite() &&
                  id.allFinite() && un.allFinite();
        std::string detail;
        if (ok) {
            const double tol = 1e-9;
            const bool ordered = ((pf.array() <= pk.array() * (1.0 + tol) + tol).all()) &&
                                 ((pk.array() <= id.array() * (1.0 + tol) + tol).all());
            const double pf_peak = pf.maxCoeff();
            const double r_id = id.maxCoeff() / pf_peak;
            const double r_un = un.maxCoeff() / pf_peak;
            const double z_size = BenchmarkConfig{}.z_max;
            const double terminal = pf(pf.size() - 1) / pf_peak;
            ok = ordered && un.maxCoeff() > z_size && r_id >= 1e3 && r_un >= 1e3 && terminal <= 0.01;
            detail = std::string("ordered ") + (ordered ? "yes" : "no") + ", uniform peak " + fmt(un.maxCoeff()) +
                     ", inputdep/peakfilter " + fmt(r_id) + ", uniform/peakfilter " + fmt(r_un) +
                     ", terminal/peak " + fmt(terminal);
        } else {
            detail = "a bound is missing or not finite";
        }
        report(7, ok, detail);
    } else {
        report(7, false, "comparison not produced: " + run.error);
    }

    // 8: IQC analysis reproduces the peak gain; chain inequality along simulations.
    {
        bool ok = true;
        std::string detail;
        ErrorDynamics scalar;
        scalar.A = MatrixXd::Constant(1, 1, -1.0);
        scalar.Be = MatrixXd::Ones(1, 1);
        scalar.C = MatrixXd::Ones(1, 1);
        scalar.e0 = VectorXd::Zero(1);
        scalar.n_u = 1;
        double worst = iqc_equivalence_check(scalar, 1.0).relative_gap;
        std::mt19937_64 rng(808);
        for (int trial = 0; trial < 10; ++trial) {
            const auto err = random_error(rng, 4, 2, 1);
            worst = std::max(worst, iqc_equivalence_check(err, 0.5 * std::abs(spectral_abscissa(err.A))).relative_gap);
        }
        ok = worst <= 0.01;
        if (peak) {
            const auto rep = iqc_equivalence_check(inst.err, peak->lambda, {}, &*peak);
            worst = std::max(worst, rep.relative_gap);
            ok = ok && rep.pass;
            detail = "benchmark gap " + fmt(rep.relative_gap) + ", ";
        } else {
            ok = false;
            detail = "benchmark peak certificate missing, ";
        }

        // Chain inequality on the scalar system and a norm-bounded uncertain system.
        double chain = 0.0;
        {
            const auto sys = iqc_system_from_error(scalar);
            const auto mult = trivial_multiplier(0, 1);
            IqcOptions opt;
            opt.structure = GammaStructure::tied;
            const auto cert = iqc_peak_lmi(sys, mult, 0.5, opt);
            record_certificate(check_iqc_certificate(cert, sys, mult));
            for (int trial = 0; trial < 20; ++trial) {
                const auto r = random_input(rng, 1, 100, 0.1, 1.0);
                const auto traj = simulate(LtiSystem(sys.A, sys.B, MatrixXd::Zero(1, 0), sys.Cz, VectorXd::Zero(1)), r,
                                           0.1, 10.0);
                MatrixXd wn(1, 100);
                for (int k = 0; k < 100; ++k) {
                    wn(0, k) = cert.Gamma(0, 0) * r.values(0, k) * r.values(0, k);
                }
                const auto bound = simulate_iqc_bound(cert, SampledSignal(r.times, wn), 0.0, 0.1, 10.0);
                const auto rep = iqc_chain_check(cert, sys, mult, traj.states, bound.delta);
                chain = std::max({chain, rep.output_violation, rep.storage_violation});
            }
        }
        {
            const double rho = 0.3;
            const MatrixXd A = random_stable(rng, 3, 1.0);
            const MatrixXd Bp = 0.5 * random_matrix(rng, 3, 1);
            const MatrixXd Bw = random_matrix(rng, 3, 1);
            const MatrixXd Cq = 0.5 * random_matrix(rng, 1, 3);
            IqcSystem sys;
            sys.A = A;
            sys.B.resize(3, 2);
            sys.B << Bp, Bw;
            sys.C = MatrixXd::Zero(2, 3);
            sys.C.row(0) = Cq;
            sys.D = MatrixXd::Zero(2, 2);
            sys.D(1, 0) = 1.0;
            sys.Cz = random_matrix(rng, 1, 3);
            sys.xi0 = VectorXd::Zero(3);
            const auto mult = norm_bound_multiplier(1, 1, rho, 3);
            IqcOptions opt;
            opt.zero_channels = {0};
            const auto cert = iqc_peak_lmi(sys, mult, 0.2, opt);
            record_certificate(check_iqc_certificate(cert, sys, mult));
            std::uniform_real_distribution<double> unit(-1.0, 1.0);
            const double dt = 0.05;
            const int steps = 400;
            for (int trial = 0; trial < 20; ++trial) {
                VectorXd xi = VectorXd::Zero(3);
                MatrixXd states(3, steps + 1);
                MatrixXd wn(1, steps);
                states.col(0) = xi;
                for (int k = 0; k < steps; ++k) {
                    const double delta = rho * unit(rng);
                    const double w = unit(rng);
                    const auto d = zoh_discretize(A + delta * Bp * Cq, Bw, dt);
                    xi = d.Ad * xi + d.Bd * w;
                    states.col(k + 1) = xi;
                    wn(0, k) = cert.Gamma(1, 1) * w * w;
                }
                const auto bound = simulate_iqc_bound(
                    cert, SampledSignal(VectorXd::LinSpaced(steps, 0.0, (steps - 1) * dt), wn), 0.0, dt, steps * dt);
                const auto rep = iqc_chain_check(cert, sys, mult, states, bound.delta);
                chain = std::max({chain, rep.output_violation, rep.storage_violation});
            }
        }
        ok = ok && chain <= 1e-7;
        report(8, ok, detail + "worst gap " + fmt(worst) + ", worst chain violation " + fmt(chain));
    }

    // 9: tangent surrogate never underestimates; SCP cost never increases.
    {
        std::mt19937_64 rng(909);
        std::uniform_real_distribution<double> e(-8.0, 4.0);
        int bad = 0;
        for (int i = 0; i < 10000; ++i) {
            const double c = std::pow(10.0, e(rng));
            const double d0 = std::pow(10.0, e(rng));
            const double d = std::pow(10.0, e(rng));
            const double root = std::sqrt(c * d);
            if (sqrt_tangent_overestimator(d0, c)(d) < root - 1e-12 * std::max(1.0, root)) {
                ++bad;
            }
        }
        bool mono = false;
        std::string costs = "no robust solution";
        if (fs::exists(run.dir / "ocp_robust.json")) {
            const auto pc = io::read_json(run.dir / "ocp_robust.json").at("pass_costs").get<std::vector<double>>();
            mono = !pc.empty();
            costs.clear();
            for (std::size_t i = 0; i < pc.size(); ++i) {
                costs += (i ? " " : "") + fmt(pc[i]);
                if (i && pc[i] > pc[i - 1] + 1e-8 * (1.0 + std::abs(pc[i - 1]))) {
                    mono = false;
                }
            }
        }
        report(9, bad == 0 && mono, std::to_string(bad) + " underestimates in 10000 draws, pass costs " + costs);
    }
}

void criterion_10(const RunFiles& a, const RunFiles& b)
{
    std::vector<std::string> differing;
    int compared = 0;
    for (const auto& entry : fs::directory_iterator(a.dir)) {
        const auto name = entry.path().filename().string();
        if (name == "manifest.json") {
            continue;
        }
        const auto other = b.dir / name;
        ++compared;
        if (!fs::exists(other)) {
            differing.push_back(name + " (missing)");
            continue;
        }
        bool same = false;
        if (entry.path().extension() == ".json") {
            same = strip_timings(io::read_json(entry.path())) == strip_timings(io::read_json(other));
        } else {
            same = slurp(entry.path()) == slurp(other);
        }
        if (!same) {
            differing.push_back(name);
        }
    }
    std::string detail = std::to_string(compared) + " files compared";
    for (const auto& d : differing) {
        detail += ", differs: " + d;
    }
    report(10, a.complete && b.complete && differing.empty() && compared > 0, detail);
}

} // namespace

int main(int argc, char** argv)
{
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "rompc_acceptance";
    fs::create_directories(work);
    try {
        criterion_1();
        criterion_2();
        criterion_4();
        const auto first = run_benchmark(work / "run1");
        criteria_3_and_5_to_9(first);
        report(3, certificates_checked > 0 && certificates_failed == 0,
               std::to_string(certificates_checked - certificates_failed) + " of " +
                   std::to_string(certificates_checked) + " certificates pass at 1e-7");
        const auto second = run_benchmark(work / "run2");
        criterion_10(first, second);
    } catch (const std::exception& e) {
        std::cout << "acceptance aborted: " << e.what() << std::endl;
        return 2;
    }
    std::sort(lines.begin(), lines.end(), [](const Line& x, const Line& y) { return x.id < y.id; });
    int failed = 0;
    std::cout << "\nsummary\n";
    for (const auto& l : lines) {
        std::cout << "criterion " << l.id << ": " << (l.pass ? "PASS" : "FAIL") << std::endl;
        failed += l.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
