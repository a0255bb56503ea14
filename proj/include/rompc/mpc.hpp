#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rompc/bounding.hpp"
#include "rompc/conic.hpp"
#include "rompc/error.hpp"
#include "rompc/lti.hpp"
#include "rompc/reduction.hpp"

namespace rompc {

enum class OcpMode { robust, naive };

inline const char* to_string(OcpMode m)
{
    return m == OcpMode::robust ? "robust" : "naive";
}

/// Affine map delta -> alpha + beta delta tangent to sqrt(c delta) at delta0.
struct SqrtTangent {
    double alpha = 0.0;
    double beta = 0.0;

    [[nodiscard]] double operator()(double delta) const { return alpha + beta * delta; }
};

/**
 * @brief Tangent of the concave map sqrt(c delta) at delta0.
 *
 * Concavity makes the tangent a global over-estimator on delta >= 0.
 */
inline SqrtTangent sqrt_tangent_overestimator(double delta0, double c)
{
    detail::require(delta0 > 0.0 && std::isfinite(delta0), "sqrt_tangent_overestimator: delta0 must be positive");
    detail::require(c > 0.0 && std::isfinite(c), "sqrt_tangent_overestimator: c must be positive");
    const double root = std::sqrt(c * delta0);
    SqrtTangent t;
    t.beta = c / (2.0 * root);
    t.alpha = root - t.beta * delta0;
    return t;
}

/// Cost and constraint data of the finite-horizon problem.
struct ProblemData {
    std::vector<AffineConstraint> output_constraints; ///< g_j(z) = a_j^T z + b_j <= 0
    VectorXd u_min;
    VectorXd u_max;
    SampledSignal z_ref;
    double input_weight = 1e-3;
    double tightening_factor = 1.0; ///< multiplies L_j delta_z in the tightened constraints

    void validate(int n_u, int n_z) const
    {
        detail::require(u_min.size() == n_u && u_max.size() == n_u, "ProblemData: input box has wrong size");
        detail::require(u_min.allFinite() && u_max.allFinite(), "ProblemData: input box must be bounded");
        detail::require((u_min.array() <= u_max.array()).all(), "ProblemData: empty input box");
        detail::require(z_ref.channels() == n_z, "ProblemData: reference has wrong channel count");
        detail::require(input_weight >= 0.0, "ProblemData: input weight must be non-negative");
        detail::require(tightening_factor >= 1.0, "ProblemData: tightening factor must be >= 1");
        for (const auto& g : output_constraints) {
            detail::require(g.a.size() == n_z && g.a.allFinite() && std::isfinite(g.b),
                            "ProblemData: output constraint has wrong size");
        }
    }
};

struct OcpSpec {
    ReducedModel rom;
    std::optional<RobustPredictor> predictor; ///< required in robust mode
    ProblemData data;
    double dt = 0.0;
    int N = 0;
    OcpMode mode = OcpMode::robust;
    std::vector<double> linearization_points; ///< N+1 tangent points; empty selects a naive-rollout guess
    int scp_passes = 2;
    double delta_floor = 1e-12;
    int seed_candidates = 7; ///< shrink factors 10^0 .. 10^-(n-1) tried for the first tangent points
    conic::Options solver;

    void validate() const
    {
        detail::require(dt > 0.0 && std::isfinite(dt), "OcpSpec: dt must be positive");
        detail::require(N >= 1, "OcpSpec: horizon must have at least one step");
        detail::require(scp_passes >= 1, "OcpSpec: scp_passes must be >= 1");
        detail::require(seed_candidates >= 1, "OcpSpec: seed_candidates must be >= 1");
        detail::require(delta_floor > 0.0, "OcpSpec: delta_floor must be positive");
        detail::require(mode == OcpMode::naive || predictor.has_value(), "OcpSpec: robust mode needs a predictor");
        detail::require(linearization_points.empty() || static_cast<int>(linearization_points.size()) == N + 1,
                        "OcpSpec: one linearization point per grid time required");
        for (double d : linearization_points) {
            detail::require(d >= delta_floor, "OcpSpec: linearization points must be >= delta_floor");
        }
        data.validate(static_cast<int>(rom.Br.cols()), static_cast<int>(rom.Cr.rows()));
    }
};

struct OcpSolution {
    sdp::Status status = sdp::Status::solver_limit;
    SampledSignal u;
    VectorXd times;
    MatrixXd xr;
    MatrixXd psi;
    MatrixXd zr;
    VectorXd s;               ///< per-step upper bound on the filtered drive
    VectorXd delta_chi;
    VectorXd delta_z;         ///< sqrt(gamma lambda delta_chi)
    VectorXd delta_z_bound;   ///< tangent surrogate used in cost and constraints
    double J = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> pass_costs;
    int passes = 0;
    double solve_seconds = 0.0;
};

namespace detail {

/// Stacked X_k = f_k + M_k u for k = 0..N under ZOH.
struct Condensed {
    int nx = 0;
    MatrixXd M;
    VectorXd f;

    [[nodiscard]] auto Mk(int k) const { return M.middleRows(static_cast<Eigen::Index>(k) * nx, nx); }
    [[nodiscard]] auto fk(int k) const { return f.segment(static_cast<Eigen::Index>(k) * nx, nx); }
};

inline Condensed condense(const LtiSystem& sys, double dt, int N)
{
    const auto d = zoh_discretize(sys.A, sys.B, dt);
    const int nx = sys.states();
    const int nu = sys.inputs();
    Condensed c;
    c.nx = nx;
    c.M = MatrixXd::Zero(static_cast<Eigen::Index>(N + 1) * nx, static_cast<Eigen::Index>(N) * nu);
    c.f.resize(static_cast<Eigen::Index>(N + 1) * nx);
    c.f.head(nx) = sys.x0;
    for (int k = 0; k < N; ++k) {
        c.f.segment(static_cast<Eigen::Index>(k + 1) * nx, nx) = d.Ad * c.fk(k);
        c.M.middleRows(static_cast<Eigen::Index>(k + 1) * nx, nx) = d.Ad * c.Mk(k);
        c.M.block(static_cast<Eigen::Index>(k + 1) * nx, static_cast<Eigen::Index>(k) * nu, nx, nu) = d.Bd;
    }
    return c;
}

/// Variable layout [u; s; t; v] of the condensed program.
struct OcpLayout {
    int N = 0;
    int nu = 0;
    int iu = 0;
    int is = 0;
    int ns = 0;
    int it = 0;
    int iv = 0;
    int n = 0;

    OcpLayout(int N_, int nu_, bool robust) : N(N_), nu(nu_)
    {
        iu = 0;
        is = N * nu;
        ns = robust ? N : 0;
        it = is + ns;
        iv = it + N;
        n = iv + N;
    }
};

/// Assembled program plus what is needed to read the solution back.
struct OcpProgram {
    conic::ConeProgram cone;
    OcpLayout layout;
    Condensed states;
    MatrixXd Cz;             ///< z_r = Cz X
    MatrixXd Md;             ///< delta = d_free + Md s (robust)
    VectorXd d_free;
    std::vector<SqrtTangent> tangents;
    double constant_cost = 0.0;
};

inline OcpProgram assemble_ocp(const OcpSpec& spec, const std::vector<double>& points)
{
    const bool robust = spec.mode == OcpMode::robust;
    const int N = spec.N;
    const int nu = static_cast<int>(spec.rom.Br.cols());
    const int nz = static_cast<int>(spec.rom.Cr.rows());
    const double dt = spec.dt;
    const auto& data = spec.data;

    LtiSystem nominal = robust ? spec.predictor->nominal_system() : spec.rom.as_system();
    OcpProgram prog{conic::ConeProgram{}, OcpLayout(N, nu, robust), condense(nominal, dt, N), nominal.C,
                    MatrixXd(), VectorXd(), {}, 0.0};
    const auto& L = prog.layout;
    const auto& X = prog.states;

    // delta_k = d_free_k + Md_k s with exact scalar ZOH steps.
    double cgain = 0.0;
    if (robust) {
        const auto& pred = *spec.predictor;
        const double lam = pred.cert.lambda;
        const double a = std::exp(-lam * dt);
        const double b = -std::expm1(-lam * dt) / lam * pred.cert.gamma;
        const double w2 = pred.wbar * pred.wbar;
        prog.Md = MatrixXd::Zero(N + 1, N);
        prog.d_free.resize(N + 1);
        prog.d_free(0) = pred.delta0;
        for (int k = 0; k < N; ++k) {
            prog.d_free(k + 1) = a * prog.d_free(k) + b * w2;
            prog.Md.row(k + 1) = a * prog.Md.row(k);
            prog.Md(k + 1, k) += b;
        }
        cgain = pred.tube_gain();
        for (int k = 0; k <= N; ++k) {
            prog.tangents.push_back(sqrt_tangent_overestimator(std::max(points[k], spec.delta_floor), cgain));
        }
    }

    const int n_box = 2 * N * nu;
    const int n_track = 2 * N * nz;
    const int n_norm = 2 * N * nu;
    const int n_tight = N * static_cast<int>(data.output_constraints.size());
    const int n_lin = n_box + n_track + n_norm + n_tight;
    int q = 0;
    MatrixXd Hx, Hu;
    if (robust) {
        std::tie(Hx, Hu) = spec.predictor->drive_maps();
        q = static_cast<int>(Hx.rows());
    }
    const int soc_dim = q + 2;
    const int n_soc = robust ? 2 * N : 0;
    auto& cone = prog.cone;
    cone.n_linear = n_lin;
    cone.soc_dims.assign(n_soc, soc_dim);
    cone.G = MatrixXd::Zero(n_lin + n_soc * soc_dim, L.n);
    cone.h = VectorXd::Zero(cone.G.rows());
    cone.c = VectorXd::Zero(L.n);

    auto zr_k = [&](int k) { return std::pair<MatrixXd, VectorXd>(prog.Cz * X.Mk(k), prog.Cz * X.fk(k)); };

    int row = 0;
    for (int k = 0; k < N; ++k) {
        for (int j = 0; j < nu; ++j) {
            const int col = L.iu + k * nu + j;
            cone.G(row, col) = 1.0;
            cone.h(row++) = data.u_max(j);
            cone.G(row, col) = -1.0;
            cone.h(row++) = -data.u_min(j);
        }
    }
    for (int k = 0; k < N; ++k) {
        const auto [Mz, fz] = zr_k(k);
        const VectorXd ref = data.z_ref.at(k * dt);
        for (int i = 0; i < nz; ++i) {
            // +-(z_r,k,i - ref_i) <= t_k
            cone.G.row(row).segment(L.iu, N * nu) = Mz.row(i);
            cone.G(row, L.it + k) = -1.0;
            cone.h(row++) = ref(i) - fz(i);
            cone.G.row(row).segment(L.iu, N * nu) = -Mz.row(i);
            cone.G(row, L.it + k) = -1.0;
            cone.h(row++) = fz(i) - ref(i);
        }
    }
    for (int k = 0; k < N; ++k) {
        for (int j = 0; j < nu; ++j) {
            const int col = L.iu + k * nu + j;
            cone.G(row, col) = 1.0;
            cone.G(row++, L.iv + k) = -1.0;
            cone.G(row, col) = -1.0;
            cone.G(row++, L.iv + k) = -1.0;
        }
    }
    for (const auto& g : data.output_constraints) {
        const double lip = g.lipschitz() * data.tightening_factor;
        if (robust) {
            const double dz0 = prog.tangents[0](prog.d_free(0));
            const VectorXd z0 = prog.Cz * X.fk(0);
            if (g(z0) + lip * dz0 > 0.0) {
                throw InfeasibleError("assemble_ocp: the initial tube already violates an output constraint");
            }
        }
        for (int k = 1; k <= N; ++k) {
            // a^T z_r,k + b + lip (alpha_k + beta_k delta_k) <= 0
            const auto [Mz, fz] = zr_k(k);
            cone.G.row(row).segment(L.iu, N * nu) = g.a.transpose() * Mz;
            double rhs = -g.b - g.a.dot(fz);
            if (robust) {
                const auto& t = prog.tangents[k];
                cone.G.row(row).segment(L.is, N) += lip * t.beta * prog.Md.row(k);
                rhs -= lip * (t.alpha + t.beta * prog.d_free(k));
            }
            cone.h(row++) = rhs;
        }
    }
    if (robust) {
        for (int k = 0; k < N; ++k) {
            for (int side = 0; side < 2; ++side) {
                // slack = [s_k + 1; s_k - 1; 2 r] in the cone  <=>  s_k >= ||r||^2
                const int xk = k + side;
                MatrixXd Mr = Hx * X.Mk(xk);
                Mr.middleCols(static_cast<Eigen::Index>(k) * nu, nu) += Hu;
                const VectorXd fr = Hx * X.fk(xk);
                cone.G(row, L.is + k) = -1.0;
                cone.h(row++) = 1.0;
                cone.G(row, L.is + k) = -1.0;
                cone.h(row++) = -1.0;
                cone.G.block(row, L.iu, q, N * nu) = -2.0 * Mr;
                cone.h.segment(row, q) = 2.0 * fr;
                row += q;
            }
        }
    }

    // dt * sum_{k<N} (t_k + R v_k + alpha_k + beta_k delta_k)
    cone.c.segment(L.it, N).setConstant(dt);
    cone.c.segment(L.iv, N).setConstant(dt * data.input_weight);
    if (robust) {
        for (int k = 0; k < N; ++k) {
            const auto& t = prog.tangents[k];
            cone.c.segment(L.is, N) += dt * t.beta * prog.Md.row(k).transpose();
            prog.constant_cost += dt * (t.alpha + t.beta * prog.d_free(k));
        }
    }
    return prog;
}

inline OcpSolution extract_solution(const OcpSpec& spec, const OcpProgram& prog, const conic::Result& res)
{
    const auto& L = prog.layout;
    const int N = spec.N;
    const int nr = spec.rom.order();
    OcpSolution sol;
    sol.status = res.status;
    sol.times.resize(N + 1);
    for (int k = 0; k <= N; ++k) {
        sol.times(k) = k * spec.dt;
    }
    const VectorXd uvec = res.x.segment(L.iu, N * L.nu);
    MatrixXd U = Eigen::Map<const MatrixXd>(uvec.data(), L.nu, N);
    sol.u = SampledSignal(sol.times.head(N), U);
    const VectorXd Xs = prog.states.f + prog.states.M * uvec;
    const MatrixXd Xm = Eigen::Map<const MatrixXd>(Xs.data(), prog.states.nx, N + 1);
    sol.xr = Xm.topRows(nr);
    sol.psi = Xm.bottomRows(prog.states.nx - nr);
    sol.zr = prog.Cz * Xm;
    sol.J = res.objective + prog.constant_cost;
    if (spec.mode == OcpMode::robust) {
        sol.s = res.x.segment(L.is, N);
        sol.delta_chi = prog.d_free + prog.Md * sol.s;
        const double c = spec.predictor->tube_gain();
        sol.delta_z.resize(N + 1);
        sol.delta_z_bound.resize(N + 1);
        for (int k = 0; k <= N; ++k) {
            sol.delta_z(k) = std::sqrt(c * std::max(sol.delta_chi(k), 0.0));
            sol.delta_z_bound(k) = prog.tangents[k](sol.delta_chi(k));
        }
    } else {
        sol.s = VectorXd::Zero(N);
        sol.delta_chi = VectorXd::Zero(N + 1);
        sol.delta_z = VectorXd::Zero(N + 1);
        sol.delta_z_bound = VectorXd::Zero(N + 1);
    }
    return sol;
}

} // namespace detail

inline OcpSolution solve_single_pass(const OcpSpec& spec, const std::vector<double>& points)
{
    const auto prog = detail::assemble_ocp(spec, points);
    const auto res = conic::solve(prog.cone, spec.solver);
    return detail::extract_solution(spec, prog, res);
}

/**
 * @brief Solves the condensed program; in robust mode re-linearizes the
 * square-root surrogate at each pass's delta trajectory.
 *
 * Returns the cheapest successful pass. Without given linearization points the
 * first pass uses the best of several scaled copies of the bound produced by
 * the naive solution.
 */
inline OcpSolution solve_ocp(const OcpSpec& spec)
{
    spec.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    if (spec.mode == OcpMode::naive) {
        auto sol = solve_single_pass(spec, {});
        sol.passes = 1;
        sol.pass_costs = {sol.J};
        sol.solve_seconds = elapsed();
        return sol;
    }

    const auto floored = [&](std::vector<double> pts) {
        for (double& p : pts) {
            p = std::max(p, spec.delta_floor);
        }
        return pts;
    };
    std::vector<double> points = spec.linearization_points;
    std::optional<OcpSolution> first;
    if (points.empty()) {
        // Tangent points along the naive rollout's bound, shrunk by powers of ten;
        // the cheapest feasible candidate seeds the successive passes.
        OcpSpec naive = spec;
        naive.mode = OcpMode::naive;
        const auto guess = solve_single_pass(naive, {});
        VectorXd base = VectorXd::Ones(spec.N + 1);
        if (guess.status == sdp::Status::optimal) {
            base = simulate_bound(*spec.predictor, guess.u, spec.dt, spec.N * spec.dt).delta_chi;
        }
        for (int j = 0; j < spec.seed_candidates; ++j) {
            std::vector<double> cand(spec.N + 1);
            for (int k = 0; k <= spec.N; ++k) {
                cand[k] = base(k) * std::pow(10.0, -j);
            }
            cand = floored(cand);
            auto sol = solve_single_pass(spec, cand);
            if (sol.status == sdp::Status::optimal && (!first || sol.J < first->J)) {
                first = sol;
                points = cand;
            }
        }
        if (!first) {
            points = floored(std::vector<double>(spec.N + 1, 0.0));
        }
    }
    points = floored(points);

    std::optional<OcpSolution> best;
    std::vector<double> costs;
    OcpSolution last;
    for (int pass = 0; pass < spec.scp_passes; ++pass) {
        if (pass == 0 && first) {
            last = *first;
        } else {
            last = solve_single_pass(spec, points);
        }
        if (last.status != sdp::Status::optimal) {
            break;
        }
        costs.push_back(last.J);
        if (!best || last.J <= best->J) {
            best = last;
        }
        for (int k = 0; k <= spec.N; ++k) {
            points[k] = std::max(last.delta_chi(k), spec.delta_floor);
        }
    }
    OcpSolution out = best ? *best : last;
    out.pass_costs = costs;
    out.passes = static_cast<int>(costs.size());
    out.solve_seconds = elapsed();
    return out;
}

} // namespace rompc
