#pragma once

#include <random>

#include <Eigen/Dense>

#include "rompc/rompc.hpp"

namespace testing_support {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c)
{
    std::normal_distribution<double> g;
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) {
            m(i, j) = g(rng);
        }
    }
    return m;
}

/// Random A shifted so its spectral abscissa equals -margin.
inline MatrixXd random_stable(std::mt19937_64& rng, int n, double margin = 0.5)
{
    MatrixXd A = random_matrix(rng, n, n) / std::sqrt(static_cast<double>(n));
    const double a = rompc::spectral_abscissa(A);
    return A - (a + margin) * MatrixXd::Identity(n, n);
}

inline rompc::LtiSystem random_system(std::mt19937_64& rng, int n, int nu, int nw, int nz)
{
    return rompc::LtiSystem(random_stable(rng, n), random_matrix(rng, n, nu), random_matrix(rng, n, nw),
                            random_matrix(rng, nz, n), random_matrix(rng, n, 1));
}

inline rompc::ErrorDynamics random_error(std::mt19937_64& rng, int n, int q, int nz)
{
    rompc::ErrorDynamics e;
    e.A = random_stable(rng, n);
    e.Be = random_matrix(rng, n, q);
    e.C = random_matrix(rng, nz, n);
    e.e0 = VectorXd::Zero(n);
    e.n_w = 0;
    e.n_r = q - 1;
    e.n_u = 1;
    return e;
}

/// Scalar e' = -e + r, z = e.
inline rompc::ErrorDynamics scalar_error()
{
    rompc::ErrorDynamics e;
    e.A = MatrixXd::Constant(1, 1, -1.0);
    e.Be = MatrixXd::Ones(1, 1);
    e.C = MatrixXd::Ones(1, 1);
    e.e0 = VectorXd::Zero(1);
    e.n_w = 0;
    e.n_r = 0;
    e.n_u = 1;
    return e;
}

/// Piecewise-constant input with `N` random steps in [-amp, amp].
inline rompc::SampledSignal random_input(std::mt19937_64& rng, int channels, int N, double dt, double amp)
{
    std::uniform_real_distribution<double> u(-amp, amp);
    MatrixXd v(channels, N);
    for (int k = 0; k < N; ++k) {
        for (int i = 0; i < channels; ++i) {
            v(i, k) = u(rng);
        }
    }
    return rompc::SampledSignal::uniform(dt, v);
}

/// Classical RK4 on x' = A x + B u with u held, `sub` substeps per interval h.
inline VectorXd rk4(const MatrixXd& A, const MatrixXd& B, VectorXd x, const VectorXd& u, double h, int sub)
{
    const double s = h / sub;
    const VectorXd bu = B * u;
    for (int i = 0; i < sub; ++i) {
        const VectorXd k1 = A * x + bu;
        const VectorXd k2 = A * (x + 0.5 * s * k1) + bu;
        const VectorXd k3 = A * (x + 0.5 * s * k2) + bu;
        const VectorXd k4 = A * (x + s * k3) + bu;
        x += s / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return x;
}

/// Small chain whose lumped-modal model reproduces the DC error exactly.
inline rompc::BenchmarkConfig small_chain()
{
    rompc::BenchmarkConfig cfg;
    cfg.n_masses = 10;
    cfg.n_modes = 2;
    cfg.lambda_count = 4;
    cfg.random_inputs = 5;
    return cfg;
}

} // namespace testing_support
