#include <gtest/gtest.h>

#include "support.hpp"

using namespace rompc;
using namespace testing_support;

TEST(SqrtTangent, UnitExample)
{
    const auto t = sqrt_tangent_overestimator(1.0, 1.0);
    EXPECT_DOUBLE_EQ(t.alpha, 0.5);
    EXPECT_DOUBLE_EQ(t.beta, 0.5);
    EXPECT_DOUBLE_EQ(t(4.0), 2.5);
}

TEST(SqrtTangent, TouchesAtTheLinearizationPoint)
{
    const auto t = sqrt_tangent_overestimator(0.3, 7.0);
    EXPECT_NEAR(t(0.3), std::sqrt(2.1), 1e-15);
}

TEST(SqrtTangent, NeverUnderestimates)
{
    std::mt19937_64 rng(91);
    std::uniform_real_distribution<double> e(-8.0, 4.0);
    for (int i = 0; i < 10000; ++i) {
        const double c = std::pow(10.0, e(rng));
        const double d0 = std::pow(10.0, e(rng));
        const double d = std::pow(10.0, e(rng));
        const auto t = sqrt_tangent_overestimator(d0, c);
        const double root = std::sqrt(c * d);
        EXPECT_GE(t(d), root - 1e-12 * std::max(1.0, root));
    }
}

TEST(SqrtTangent, RejectsNonPositiveArguments)
{
    EXPECT_THROW(sqrt_tangent_overestimator(0.0, 1.0), InvalidArgument);
    EXPECT_THROW(sqrt_tangent_overestimator(1.0, -1.0), InvalidArgument);
}

TEST(NaiveOcp, ZeroReferenceGivesZeroInput)
{
    auto cfg = small_chain();
    cfg.z_ref = 0.0;
    const auto inst = make_instance(cfg);
    const auto sol = solve_ocp(make_ocp_spec(inst, OcpMode::naive));
    ASSERT_EQ(sol.status, sdp::Status::optimal);
    EXPECT_LT(sol.u.values.cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(sol.J, 0.0, 1e-6);
}

TEST(RobustOcp, ExactModelWithSilentFilterMatchesNaive)
{
    auto cfg = small_chain();
    cfg.z_ref = 0.5;
    cfg.horizon = 60.0;
    auto inst = make_instance(cfg);
    const int n = inst.sys.states();
    const MatrixXd I = MatrixXd::Identity(n, n);
    inst.rom = petrov_galerkin_reduce(inst.sys, I, I);
    inst.err = error_dynamics(inst.sys, inst.rom);
    const int q = inst.err.drive_size();
    BoundingFilter f;
    f.Apsi = -MatrixXd::Identity(1, 1);
    f.Bpsi = MatrixXd::Zero(1, q);
    f.Cpsi = MatrixXd::Zero(q, 1);
    f.Dpsi = MatrixXd::Zero(q, q);
    f.Dpsi.topLeftCorner(inst.err.n_w, inst.err.n_w).setIdentity();
    f.omega_c = 1.0;
    f.scales = VectorXd::Ones(q);
    f.n_w = inst.err.n_w;
    GainCertificate cert;
    cert.kind = CertificateKind::filtered_peak;
    cert.P = MatrixXd::Identity(n + 1, n + 1);
    cert.lambda = 1.0;
    cert.gamma = 1.0;
    const auto pred = make_robust_predictor(inst.sys, inst.rom, f, cert, 0.0);
    const auto naive = solve_ocp(make_ocp_spec(inst, OcpMode::naive));
    const auto robust = solve_ocp(make_ocp_spec(inst, OcpMode::robust, pred));
    ASSERT_EQ(naive.status, sdp::Status::optimal);
    ASSERT_EQ(robust.status, sdp::Status::optimal);
    const auto tube = simulate_bound(pred, robust.u, cfg.dt, inst.N * cfg.dt);
    EXPECT_EQ(tube.delta_chi.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LT(robust.delta_z_bound.head(inst.N).maxCoeff(), 1e-5 * cfg.z_ref);
    EXPECT_NEAR(robust.J, naive.J, 1e-4 * (1.0 + naive.J));
}

class SmallChainOcp : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        inst_ = new Instance(make_instance(small_chain()));
        const auto synth = synthesize_filtered(*inst_);
        pred_ = new RobustPredictor(make_robust_predictor(inst_->sys, inst_->rom, synth.filter, synth.cert, 0.0));
        naive_ = new OcpSolution(solve_ocp(make_ocp_spec(*inst_, OcpMode::naive)));
        robust_ = new OcpSolution(solve_ocp(make_ocp_spec(*inst_, OcpMode::robust, *pred_)));
    }
    static void TearDownTestSuite()
    {
        delete robust_;
        delete naive_;
        delete pred_;
        delete inst_;
    }
    static Instance* inst_;
    static RobustPredictor* pred_;
    static OcpSolution* naive_;
    static OcpSolution* robust_;
};

Instance* SmallChainOcp::inst_ = nullptr;
RobustPredictor* SmallChainOcp::pred_ = nullptr;
OcpSolution* SmallChainOcp::naive_ = nullptr;
OcpSolution* SmallChainOcp::robust_ = nullptr;

TEST_F(SmallChainOcp, BothProgramsSolve)
{
    EXPECT_EQ(naive_->status, sdp::Status::optimal);
    ASSERT_EQ(robust_->status, sdp::Status::optimal);
    EXPECT_EQ(robust_->times.size(), inst_->N + 1);
}

TEST_F(SmallChainOcp, NaiveCostIsNoLargerThanRobust)
{
    EXPECT_LE(naive_->J, robust_->J + 1e-8);
}

TEST_F(SmallChainOcp, PassCostsNeverIncrease)
{
    ASSERT_GE(robust_->pass_costs.size(), 1U);
    for (std::size_t i = 1; i < robust_->pass_costs.size(); ++i) {
        EXPECT_LE(robust_->pass_costs[i], robust_->pass_costs[i - 1] + 1e-8 * (1.0 + std::abs(robust_->pass_costs[i - 1])));
    }
}

TEST_F(SmallChainOcp, TrajectoriesMatchIndependentResimulation)
{
    const double T = inst_->N * inst_->cfg.dt;
    const auto tube = simulate_bound(*pred_, robust_->u, inst_->cfg.dt, T);
    const double scale = 1.0 + tube.delta_chi.cwiseAbs().maxCoeff();
    EXPECT_LT((tube.zr - robust_->zr).cwiseAbs().maxCoeff(), 1e-7 * (1.0 + tube.zr.cwiseAbs().maxCoeff()));
    EXPECT_LT((tube.delta_chi - robust_->delta_chi).cwiseAbs().maxCoeff(), 1e-7 * scale);
    for (int k = 0; k < inst_->N; ++k) {
        EXPECT_GE(robust_->s(k), tube.drive(k) - 1e-8 * (1.0 + tube.drive(k)));
    }
}

TEST_F(SmallChainOcp, SurrogateAndTighteningHoldOnTheGrid)
{
    const double c = pred_->tube_gain();
    for (int k = 0; k <= inst_->N; ++k) {
        const double root = std::sqrt(c * std::max(0.0, robust_->delta_chi(k)));
        EXPECT_GE(robust_->delta_z_bound(k), root - 1e-9 * (1.0 + root));
        if (k >= 1) {
            for (const auto& g : inst_->data.output_constraints) {
                EXPECT_LE(g(robust_->zr.col(k)) + g.lipschitz() * robust_->delta_z_bound(k), 1e-7);
            }
        }
    }
}

TEST_F(SmallChainOcp, FullOrderRolloutIsSafeAndCheaperThanTheBound)
{
    const auto robust = rollout_report(*inst_, robust_->u, 4);
    EXPECT_LE(robust.max_violation, 1e-6);
    EXPECT_LE(robust.realized_cost, robust_->J + 1e-6 * (1.0 + std::abs(robust_->J)));
    const auto naive = rollout_report(*inst_, naive_->u, 4);
    EXPECT_GT(naive.max_violation, 1e-3);
}
