#include <gtest/gtest.h>

#include "support.hpp"

using namespace rompc;
using namespace testing_support;

TEST(Zoh, ScalarClosedForm)
{
    const auto d = zoh_discretize(MatrixXd::Constant(1, 1, -1.0), MatrixXd::Ones(1, 1), 1.0);
    EXPECT_NEAR(d.Ad(0, 0), std::exp(-1.0), 1e-15);
    EXPECT_NEAR(d.Bd(0, 0), 1.0 - std::exp(-1.0), 1e-15);
}

TEST(Zoh, DoubleIntegrator)
{
    MatrixXd A(2, 2);
    A << 0, 1, 0, 0;
    MatrixXd B(2, 1);
    B << 0, 1;
    const double h = 0.7;
    const auto d = zoh_discretize(A, B, h);
    MatrixXd Ad(2, 2);
    Ad << 1, h, 0, 1;
    MatrixXd Bd(2, 1);
    Bd << h * h / 2, h;
    EXPECT_LT((d.Ad - Ad).norm(), 1e-14);
    EXPECT_LT((d.Bd - Bd).norm(), 1e-14);
}

TEST(Zoh, MatchesRungeKuttaOnRandomSystems)
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const MatrixXd A = random_stable(rng, 6);
        const MatrixXd B = random_matrix(rng, 6, 2);
        const auto d = zoh_discretize(A, B, 0.5);
        const VectorXd x = random_matrix(rng, 6, 1);
        const VectorXd u = random_matrix(rng, 2, 1);
        const VectorXd exact = d.Ad * x + d.Bd * u;
        EXPECT_LT((exact - rk4(A, B, x, u, 0.5, 400)).norm(), 1e-10 * (1.0 + exact.norm()));
    }
}

TEST(Zoh, RejectsNonPositiveStep)
{
    EXPECT_THROW(zoh_discretize(MatrixXd::Identity(1, 1), MatrixXd::Ones(1, 1), 0.0), InvalidArgument);
}

TEST(Simulate, StepResponseOfFirstOrderLag)
{
    const auto sys = LtiSystem::from_abc(MatrixXd::Constant(1, 1, -2.0), MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1));
    const auto traj = simulate(sys, SampledSignal::constant(VectorXd::Ones(1)), 0.1, 3.0);
    for (Eigen::Index k = 0; k < traj.times.size(); ++k) {
        EXPECT_NEAR(traj.outputs(0, k), 0.5 * (1.0 - std::exp(-2.0 * traj.times(k))), 1e-14);
    }
}

TEST(Simulate, AgreesWithRungeKuttaUnderPiecewiseInput)
{
    std::mt19937_64 rng(5);
    const auto sys = random_system(rng, 5, 2, 1, 2);
    const auto u = random_input(rng, 2, 10, 0.4, 1.0);
    const auto w = random_input(rng, 1, 10, 0.4, 0.5);
    const auto traj = simulate(sys, u, w, 0.2, 4.0);
    MatrixXd Bu(5, 3);
    Bu << sys.B, sys.E;
    VectorXd x = sys.x0;
    for (Eigen::Index k = 0; k + 1 < traj.times.size(); ++k) {
        VectorXd in(3);
        in << u.at(traj.times(k)), w.at(traj.times(k));
        x = rk4(sys.A, Bu, x, in, 0.2, 200);
        EXPECT_LT((traj.states.col(k + 1) - x).norm(), 1e-9 * (1.0 + x.norm()));
    }
}

TEST(Simulate, RejectsInputSwitchOffTheGrid)
{
    const auto sys = LtiSystem::from_abc(MatrixXd::Constant(1, 1, -1.0), MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1));
    VectorXd t(2);
    t << 0.0, 0.15;
    const SampledSignal u(t, MatrixXd::Ones(1, 2));
    EXPECT_THROW(simulate(sys, u, 0.1, 1.0), InvalidArgument);
}

TEST(SpectralAbscissa, DiagonalAndDefective)
{
    MatrixXd A = MatrixXd::Zero(3, 3);
    A.diagonal() << -1, -3, -0.5;
    EXPECT_DOUBLE_EQ(spectral_abscissa(A), -0.5);
    MatrixXd J(2, 2);
    J << -2, 1, 0, -2;
    EXPECT_NEAR(spectral_abscissa(J), -2.0, 1e-7);
    EXPECT_TRUE(is_hurwitz(J));
    EXPECT_FALSE(is_hurwitz(MatrixXd::Zero(1, 1)));
}

TEST(Lyapunov, ResidualOnRandomSystems)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const MatrixXd A = random_stable(rng, 8);
        const MatrixXd G = random_matrix(rng, 8, 8);
        const MatrixXd Q = G * G.transpose();
        const MatrixXd X = solve_lyapunov(A, Q);
        EXPECT_LT((A.transpose() * X + X * A + Q).norm(), 1e-10 * Q.norm());
        EXPECT_GT(X.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff(), 0.0);
    }
}

TEST(Lyapunov, ScalarClosedForm)
{
    const MatrixXd X = solve_lyapunov(MatrixXd::Constant(1, 1, -0.01), MatrixXd::Ones(1, 1));
    EXPECT_NEAR(X(0, 0), 50.0, 1e-12);
}

TEST(SampledSignal, ZeroOrderHoldLookup)
{
    VectorXd t(3);
    t << 0, 1, 2;
    MatrixXd v(1, 3);
    v << 5, 6, 7;
    const SampledSignal s(t, v);
    EXPECT_EQ(s.at(-1.0)(0), 5);
    EXPECT_EQ(s.at(0.5)(0), 5);
    EXPECT_EQ(s.at(1.0)(0), 6);
    EXPECT_EQ(s.at(10.0)(0), 7);
    EXPECT_THROW(SampledSignal(t, MatrixXd::Ones(1, 2)), InvalidArgument);
}
