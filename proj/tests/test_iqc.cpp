#include <gtest/gtest.h>

#include "support.hpp"

using namespace rompc;
using namespace testing_support;

TEST(IqcEquivalence, ScalarSystem)
{
    const auto err = scalar_error();
    const auto rep = iqc_equivalence_check(err, 1.0);
    EXPECT_TRUE(rep.pass);
    EXPECT_NEAR(rep.gamma_peak, peak_gain_closed_form(err, 1.0), 1e-3 * rep.gamma_peak);
    EXPECT_NEAR(rep.gamma_iqc, std::sqrt(2.0) * rep.gamma_peak, 1e-2 * rep.gamma_iqc);
}

TEST(IqcEquivalence, RandomSystems)
{
    std::mt19937_64 rng(404);
    for (int trial = 0; trial < 10; ++trial) {
        const auto err = random_error(rng, 4, 2, 1);
        const double lambda = 0.5 * std::abs(spectral_abscissa(err.A));
        const auto rep = iqc_equivalence_check(err, lambda);
        EXPECT_TRUE(rep.pass) << "trial " << trial << " gap " << rep.relative_gap;
    }
}

TEST(IqcEquivalence, RejectsUnstableDynamics)
{
    auto err = scalar_error();
    err.A(0, 0) = 0.5;
    EXPECT_THROW(iqc_equivalence_check(err, 1.0), InvalidArgument);
}

TEST(IqcCertificate, ImpliedGainNeedsAnIqcCertificate)
{
    GainCertificate c;
    c.kind = CertificateKind::peak;
    EXPECT_THROW(iqc_implied_gain(c), InvalidArgument);
}

namespace {

/// xi' = A xi + Bp p + Bw w with p = Delta(t) q, q = Cq xi, |Delta| <= rho.
struct Uncertain {
    MatrixXd A, Bp, Bw, Cq, Cz;
    double rho = 0.0;

    IqcSystem iqc() const
    {
        const auto n = A.rows();
        IqcSystem s;
        s.A = A;
        s.B.resize(n, 2);
        s.B << Bp, Bw;
        s.C = MatrixXd::Zero(2, n);
        s.C.row(0) = Cq;
        s.D = MatrixXd::Zero(2, 2);
        s.D(1, 0) = 1.0;
        s.Cz = Cz;
        s.xi0 = VectorXd::Zero(n);
        return s;
    }
};

Uncertain make_uncertain(std::mt19937_64& rng)
{
    Uncertain u;
    u.A = random_stable(rng, 3, 1.0);
    u.Bp = 0.5 * random_matrix(rng, 3, 1);
    u.Bw = random_matrix(rng, 3, 1);
    u.Cq = 0.5 * random_matrix(rng, 1, 3);
    u.Cz = random_matrix(rng, 1, 3);
    u.rho = 0.3;
    return u;
}

} // namespace

class NormBoundedUncertainty : public ::testing::Test {
protected:
    void SetUp() override
    {
        std::mt19937_64 rng(2024);
        plant = make_uncertain(rng);
        sys = plant.iqc();
        mult = norm_bound_multiplier(1, 1, plant.rho, 3);
        IqcOptions opt;
        opt.zero_channels = {0};
        cert = iqc_peak_lmi(sys, mult, 0.2, opt);
    }
    Uncertain plant;
    IqcSystem sys;
    IqcMultiplier mult;
    GainCertificate cert;
};

TEST_F(NormBoundedUncertainty, CertificatePassesItsResidualCheck)
{
    EXPECT_TRUE(check_iqc_certificate(cert, sys, mult).pass);
    EXPECT_GT(cert.gamma, 0.0);
}

TEST_F(NormBoundedUncertainty, ZeroChannelCarriesNoWeight)
{
    EXPECT_EQ(cert.Gamma(0, 0), 0.0);
    EXPECT_GT(cert.Gamma(1, 1), 0.0);
}

TEST_F(NormBoundedUncertainty, RandomUncertaintyStaysInsideTheBound)
{
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double dt = 0.05;
    const int steps = 400;
    for (int trial = 0; trial < 20; ++trial) {
        VectorXd xi = VectorXd::Zero(3);
        MatrixXd states(3, steps + 1);
        MatrixXd wn(1, steps);
        states.col(0) = xi;
        for (int k = 0; k < steps; ++k) {
            const double delta = plant.rho * unit(rng);
            const double w = unit(rng);
            const MatrixXd Acl = plant.A + delta * plant.Bp * plant.Cq;
            const auto d = zoh_discretize(Acl, plant.Bw, dt);
            xi = d.Ad * xi + d.Bd * w;
            states.col(k + 1) = xi;
            wn(0, k) = cert.Gamma(1, 1) * w * w;
        }
        const SampledSignal w_norm(VectorXd::LinSpaced(steps, 0.0, (steps - 1) * dt), wn);
        const auto bound = simulate_iqc_bound(cert, w_norm, 0.0, dt, steps * dt);
        const auto rep = iqc_chain_check(cert, sys, mult, states, bound.delta);
        EXPECT_TRUE(rep.holds(1e-7 * (1.0 + bound.delta.maxCoeff()))) << "trial " << trial;
        for (int k = 0; k <= steps; ++k) {
            EXPECT_LE(std::abs((plant.Cz * states.col(k))(0)), bound.z_bound(k) + 1e-7);
        }
    }
}

TEST(IqcPeakLmi, RejectsBadArguments)
{
    const auto sys = iqc_system_from_error(scalar_error());
    EXPECT_THROW(iqc_peak_lmi(sys, trivial_multiplier(0, 1), 0.0), InvalidArgument);
    EXPECT_THROW(iqc_peak_lmi(sys, trivial_multiplier(0, 2), 0.5), InvalidArgument);
    EXPECT_THROW(norm_bound_multiplier(1, 1, -1.0, 1), InvalidArgument);
}
