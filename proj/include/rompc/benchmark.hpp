#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rompc/error.hpp"
#include "rompc/lti.hpp"

namespace rompc {

/// Every constant of the mass-spring-damper chain experiment, with its published defaults.
struct BenchmarkConfig {
    int n_masses = 50;
    double mass = 1.0;
    double spring = 10.0;
    double damper = 20.0;
    int n_modes = 6;

    double omega_c = 0.0;          ///< 0 selects 10 |abscissa(A_r)|
    std::vector<double> scales;    ///< empty selects naive-rollout peaks
    double scale_floor = 1e-6;

    double dt = 2.0;
    double horizon = 300.0;
    double input_weight = 1e-3;
    double wbar = 0.0;
    double u_min = -100.0;
    double u_max = 100.0;
    double z_max = 1.0;            ///< output constraint z <= z_max
    double z_ref = 1.0;

    std::string lambda_grid;       ///< "a:b:n"; empty selects the default grid
    int lambda_count = 10;
    std::string linesearch_objective = "gamma"; ///< "gamma" or "gamma_over_sqrt_lambda"
    double lambda_l_factor = 0.99;

    int scp_passes = 2;
    double delta_floor = 1e-12;
    double tightening_factor = 1.0;
    int check_refine = 4;
    int random_inputs = 100;
    unsigned seed = 1;

    [[nodiscard]] int steps() const { return static_cast<int>(std::llround(horizon / dt)); }

    void validate() const
    {
        detail::require(n_masses >= 1, "config: n_masses must be >= 1");
        detail::require(mass > 0.0 && spring > 0.0 && damper > 0.0, "config: physical parameters must be positive");
        detail::require(n_modes >= 0 && n_modes % 2 == 0, "config: n_modes must be even");
        detail::require(omega_c >= 0.0, "config: omega_c must be >= 0");
        for (double s : scales) {
            detail::require(s > 0.0, "config: scales must be positive");
        }
        detail::require(scale_floor > 0.0, "config: scale_floor must be positive");
        detail::require(dt > 0.0 && horizon > 0.0, "config: dt and horizon must be positive");
        const double n = horizon / dt;
        detail::require(std::abs(n - std::round(n)) < 1e-9 * n, "config: horizon must be a multiple of dt");
        detail::require(input_weight > 0.0, "config: input_weight must be positive");
        detail::require(wbar >= 0.0, "config: wbar must be >= 0");
        detail::require(u_min < u_max, "config: empty input box");
        detail::require(lambda_count >= 1, "config: lambda_count must be >= 1");
        detail::require(linesearch_objective == "gamma" || linesearch_objective == "gamma_over_sqrt_lambda",
                        "config: unknown linesearch objective");
        detail::require(lambda_l_factor > 0.0 && lambda_l_factor < 1.0, "config: lambda_l_factor must be in (0,1)");
        detail::require(scp_passes >= 1, "config: scp_passes must be >= 1");
        detail::require(delta_floor > 0.0, "config: delta_floor must be positive");
        detail::require(tightening_factor >= 1.0, "config: tightening_factor must be >= 1");
        detail::require(check_refine >= 1, "config: check_refine must be >= 1");
        detail::require(random_inputs >= 0, "config: random_inputs must be >= 0");
    }
};

/**
 * @brief Chain of masses in [positions; velocities] coordinates.
 *
 * Mass 1 is tied to a wall by a spring-damper pair, neighbours are coupled by
 * spring-damper pairs, the force input acts on the last mass and the output is
 * the position of mass 1. A disturbance column (force on the last mass) is
 * added only when wbar > 0.
 */
inline LtiSystem build_benchmark_model(const BenchmarkConfig& cfg)
{
    cfg.validate();
    const int N = cfg.n_masses;
    MatrixXd K = MatrixXd::Zero(N, N);
    K(0, 0) += 1.0; // wall link
    for (int i = 0; i + 1 < N; ++i) {
        K(i, i) += 1.0;
        K(i + 1, i + 1) += 1.0;
        K(i, i + 1) -= 1.0;
        K(i + 1, i) -= 1.0;
    }
    MatrixXd A = MatrixXd::Zero(2 * N, 2 * N);
    A.topRightCorner(N, N).setIdentity();
    A.bottomLeftCorner(N, N) = -(cfg.spring / cfg.mass) * K;
    A.bottomRightCorner(N, N) = -(cfg.damper / cfg.mass) * K;
    MatrixXd B = MatrixXd::Zero(2 * N, 1);
    B(2 * N - 1, 0) = 1.0 / cfg.mass;
    MatrixXd E = cfg.wbar > 0.0 ? MatrixXd(B) : MatrixXd::Zero(2 * N, 0);
    MatrixXd C = MatrixXd::Zero(1, 2 * N);
    C(0, 0) = 1.0;
    return LtiSystem(A, B, E, C, VectorXd::Zero(2 * N));
}

} // namespace rompc
