#include <gtest/gtest.h>

#include "support.hpp"

using namespace rompc;
using namespace testing_support;

TEST(ScalarBound, ExactStepUnderHeldDrive)
{
    const double l = 0.3;
    const double g = 2.0;
    const double q = 1.7;
    const double h = 0.9;
    const double expected = std::exp(-l * h) * 0.4 + g * q * (1.0 - std::exp(-l * h)) / l;
    EXPECT_NEAR(scalar_bound_step(0.4, l, g, q, h), expected, 1e-15);
}

TEST(ScalarBound, LargerDriveGivesLargerBound)
{
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        VectorXd small(40);
        VectorXd large(40);
        for (int k = 0; k < 40; ++k) {
            small(k) = U(rng);
            large(k) = small(k) + U(rng);
        }
        const VectorXd a = propagate_scalar_bound(0.5, 1.3, 0.2, small, 0.25);
        const VectorXd b = propagate_scalar_bound(0.5, 1.3, 0.2, large, 0.25);
        EXPECT_TRUE((b.array() >= a.array()).all());
    }
}

TEST(HighPassFilter, RejectsConstantDrives)
{
    const auto inst = make_instance(small_chain());
    const double wc = 2.0;
    const VectorXd scales = VectorXd::LinSpaced(inst.rom.order() + 1, 0.5, 2.0);
    const auto f = build_highpass_filter(inst.rom, wc, scales, 0);
    f.validate();
    std::mt19937_64 rng(71);
    const auto fsys = LtiSystem(f.Apsi, f.Bpsi, MatrixXd::Zero(f.states(), 0), f.Cpsi, VectorXd::Zero(f.states()));
    const VectorXd rbar = random_matrix(rng, f.inputs(), 1);
    const double t_end = 10.0 / wc;
    const auto traj = simulate(fsys, SampledSignal::constant(rbar), t_end / 50, t_end);
    const VectorXd y0 = f.Dpsi * rbar;
    const VectorXd yT = traj.outputs.col(traj.outputs.cols() - 1) + f.Dpsi * rbar;
    EXPECT_LE(yT.norm(), 1e-3 * y0.norm());
}

TEST(HighPassFilter, IdentityFilterPassesEverything)
{
    const auto f = identity_filter(4, 1);
    f.validate();
    EXPECT_EQ(f.states(), 0);
    EXPECT_LT((f.Dpsi - MatrixXd::Identity(4, 4)).norm(), 1e-15);
}

class SmallChainTube : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        auto cfg = small_chain();
        cfg.wbar = 0.05;
        inst_ = new Instance(make_instance(cfg));
        synth_ = new SynthesisResult(synthesize_filtered(*inst_));
    }
    static void TearDownTestSuite()
    {
        delete synth_;
        delete inst_;
    }
    static RobustPredictor predictor(double wbar)
    {
        return make_robust_predictor(inst_->sys, inst_->rom, synth_->filter, synth_->cert, wbar);
    }
    static Instance* inst_;
    static SynthesisResult* synth_;
};

Instance* SmallChainTube::inst_ = nullptr;
SynthesisResult* SmallChainTube::synth_ = nullptr;

TEST_F(SmallChainTube, ContainsTheTrueErrorUnderRandomInputsAndDisturbances)
{
    const auto pred = predictor(inst_->cfg.wbar);
    std::mt19937_64 rng(inst_->cfg.seed);
    const double dt = inst_->cfg.dt;
    const int N = 40;
    for (int trial = 0; trial < 20; ++trial) {
        const auto u = random_admissible_input(rng, inst_->data.u_min, inst_->data.u_max, dt, N);
        const auto w = random_disturbance(rng, 1, inst_->cfg.wbar, dt, N);
        const auto rep = containment_check(inst_->sys, pred, u, w, dt, N * dt, 4);
        EXPECT_LE(rep.max_margin, 1e-6);
    }
}

TEST_F(SmallChainTube, InflatedDisturbanceBoundDominatesExactOne)
{
    const auto pred = predictor(inst_->cfg.wbar);
    std::mt19937_64 rng(5);
    const double dt = inst_->cfg.dt;
    const int N = 30;
    const auto u = random_admissible_input(rng, inst_->data.u_min, inst_->data.u_max, dt, N);
    const auto w = random_disturbance(rng, 1, inst_->cfg.wbar, dt, N);
    const auto tube = simulate_bound(pred, u, dt, N * dt);
    VectorXd exact_drive = tube.drive;
    for (int k = 0; k < N; ++k) {
        exact_drive(k) += w.at(k * dt).squaredNorm() - pred.wbar * pred.wbar;
    }
    const VectorXd exact = propagate_scalar_bound(pred.cert.lambda, pred.cert.gamma, pred.delta0, exact_drive, dt);
    EXPECT_TRUE((tube.delta_chi.array() >= exact.array() - 1e-12).all());
}

TEST_F(SmallChainTube, StorageStaysBelowTheBound)
{
    const auto pred = predictor(inst_->cfg.wbar);
    const auto aug = build_augmented_system(inst_->err, synth_->filter);
    const auto& P = synth_->cert.P;
    const int nr = inst_->rom.order();
    const int n = inst_->sys.states();
    const int np = synth_->filter.states();
    const int nw = inst_->sys.disturbances();
    const int nu = inst_->sys.inputs();
    // Cascade [x_r; chi] driven by [u; w], with chi = [e; psi] the augmented error state.
    MatrixXd A = MatrixXd::Zero(nr + n + np, nr + n + np);
    A.topLeftCorner(nr, nr) = inst_->rom.Ar;
    A.block(nr, 0, n + np, nr) = aug.B.middleCols(nw, nr);
    A.bottomRightCorner(n + np, n + np) = aug.A;
    MatrixXd B = MatrixXd::Zero(nr + n + np, nu);
    B.topRows(nr) = inst_->rom.Br;
    B.bottomRows(n + np) = aug.B.rightCols(nu);
    MatrixXd E = MatrixXd::Zero(nr + n + np, nw);
    E.bottomRows(n + np) = aug.B.leftCols(nw);
    MatrixXd C = MatrixXd::Zero(1, nr + n + np);
    C.block(0, nr, 1, n + np) = aug.Cz;
    VectorXd x0(nr + n + np);
    x0 << inst_->rom.xr0, aug.chi0;
    const LtiSystem cascade(A, B, E, C, x0);

    std::mt19937_64 rng(8);
    const double dt = inst_->cfg.dt;
    const int N = 30;
    const int refine = 4;
    const auto u = random_admissible_input(rng, inst_->data.u_min, inst_->data.u_max, dt, N);
    const auto w = random_disturbance(rng, nw, inst_->cfg.wbar, dt, N);
    const auto tube = simulate_bound(pred, u, dt, N * dt, refine);
    const auto traj = simulate(cascade, u, w, dt / refine, N * dt);
    const double c = pred.tube_gain();
    for (Eigen::Index k = 0; k < traj.times.size(); ++k) {
        const VectorXd chi = traj.states.col(k).tail(n + np);
        const double V = chi.dot(P * chi);
        const double scale = 1.0 + tube.delta_chi(k);
        EXPECT_LE(traj.outputs.col(k).squaredNorm() / c - V, 1e-7 * scale);
        EXPECT_LE(V - tube.delta_chi(k), 1e-7 * scale);
    }
}
