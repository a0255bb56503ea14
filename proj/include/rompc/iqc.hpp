#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "rompc/bounding.hpp"
#include "rompc/error.hpp"
#include "rompc/lti.hpp"
#include "rompc/reduction.hpp"
#include "rompc/sdp.hpp"
#include "rompc/synthesis.hpp"

namespace rompc {

/**
 * @brief Uncertain system with IQC-characterized signals:
 *
 *   xi' = A xi + B w_xi,  y_xi = C xi + D w_xi,  z_e = Cz xi,  xi(0) = xi0
 */
struct IqcSystem {
    MatrixXd A;
    MatrixXd B;
    MatrixXd C;
    MatrixXd D;
    MatrixXd Cz;
    VectorXd xi0;

    [[nodiscard]] int states() const { return static_cast<int>(A.rows()); }
    [[nodiscard]] int inputs() const { return static_cast<int>(B.cols()); }
    [[nodiscard]] int iqc_outputs() const { return static_cast<int>(C.rows()); }

    void validate() const
    {
        const auto n = A.rows();
        detail::require(A.cols() == n && B.rows() == n && C.cols() == n && D.rows() == C.rows() &&
                            D.cols() == B.cols() && Cz.cols() == n,
                        "IqcSystem: dimension mismatch");
        detail::require(xi0.size() == 0 || xi0.size() == n, "IqcSystem: xi0 has wrong size");
        detail::require(detail::all_finite(A) && detail::all_finite(B) && detail::all_finite(C) &&
                            detail::all_finite(D) && detail::all_finite(Cz),
                        "IqcSystem: non-finite data");
    }
};

/// Multiplier pair of the alpha-IQC  int e^{2 alpha t} y^T M y + e^{2 alpha t} xi^T X xi >= 0.
struct IqcMultiplier {
    MatrixXd M;
    MatrixXd X;
};

/// M = 0, X = 0: no information on w_xi.
inline IqcMultiplier trivial_multiplier(int n_y, int n_states)
{
    return {MatrixXd::Zero(n_y, n_y), MatrixXd::Zero(n_states, n_states)};
}

/**
 * @brief Static norm bound p = Delta q with ||Delta|| <= rho, for y_xi = [q; p].
 *
 * rho^2 ||q||^2 - ||p||^2 >= 0 pointwise, so the IQC holds with X = 0.
 */
inline IqcMultiplier norm_bound_multiplier(int n_q, int n_p, double rho, int n_states)
{
    detail::require(rho >= 0.0 && std::isfinite(rho), "norm_bound_multiplier: rho must be non-negative");
    IqcMultiplier m;
    m.M = MatrixXd::Zero(n_q + n_p, n_q + n_p);
    m.M.topLeftCorner(n_q, n_q) = rho * rho * MatrixXd::Identity(n_q, n_q);
    m.M.bottomRightCorner(n_p, n_p) = -MatrixXd::Identity(n_p, n_p);
    m.X = MatrixXd::Zero(n_states, n_states);
    return m;
}

enum class GammaStructure {
    tied,     ///< Gamma = gamma I, minimize gamma
    diagonal, ///< free diagonal Gamma, minimize gamma + sum_i weight_i Gamma_ii
};

struct IqcOptions {
    GammaStructure structure = GammaStructure::diagonal;
    VectorXd weights;            ///< per-channel trace weights (empty: ones)
    std::vector<int> zero_channels; ///< channels with Gamma_ii fixed to 0 (unpredictable signals)
    SynthesisOptions synthesis;
};

/// Independent re-evaluation of the IQC blocks for a certificate.
inline CertificateCheck check_iqc_certificate(const GainCertificate& cert, const IqcSystem& sys,
                                              const IqcMultiplier& mult, double tolerance = 1e-7)
{
    const auto n = sys.A.rows();
    const auto q = sys.B.cols();
    const auto nz = sys.Cz.rows();
    const MatrixXd& P = cert.P;
    const double alpha = cert.lambda;
    const double g = cert.gamma;
    MatrixXd H(sys.C.rows(), n + q);
    H << sys.C, sys.D;
    MatrixXd b1 = MatrixXd::Zero(n + q, n + q);
    b1.topLeftCorner(n, n) = 2.0 * alpha * P + sys.A.transpose() * P + P * sys.A;
    b1.topRightCorner(n, q) = P * sys.B;
    b1.bottomLeftCorner(q, n) = sys.B.transpose() * P;
    b1.bottomRightCorner(q, q) = -cert.Gamma;
    b1 += H.transpose() * mult.M * H;
    const MatrixXd shifted = P - mult.X;
    MatrixXd b2(nz + n, nz + n);
    b2 << g * MatrixXd::Identity(nz, nz), sys.Cz, sys.Cz.transpose(), alpha * shifted;
    CertificateCheck out;
    out.tolerance = tolerance;
    out.residuals.push_back({"dissipation", detail::max_eig(b1)});
    out.residuals.push_back({"output", -detail::min_eig(b2)});
    out.residuals.push_back({"shifted_psd", -detail::min_eig(shifted)});
    out.residuals.push_back({"gamma_psd", cert.Gamma.size() ? -detail::min_eig(cert.Gamma) : 0.0});
    out.pass = alpha > 0.0 && g > 0.0;
    for (const auto& r : out.residuals) {
        out.pass = out.pass && r.value <= tolerance;
    }
    return out;
}

/**
 * @brief Robust peak-to-peak certificate for a system whose signals satisfy an alpha-IQC:
 *
 *   [I 0; A B]^T [2 alpha P, P; P, 0] [I 0; A B] + [C D]^T M [C D] - diag(0, Gamma) < 0,
 *   [gamma I, Cz; Cz^T, alpha (P - X)] >= 0,  P - X >= 0.
 *
 * The certificate stores alpha in `lambda`, together with Gamma and X.
 */
inline GainCertificate iqc_peak_lmi(const IqcSystem& sys, const IqcMultiplier& mult, double alpha,
                                    const IqcOptions& opt = {})
{
    sys.validate();
    detail::require(alpha > 0.0 && std::isfinite(alpha), "iqc_peak_lmi: alpha must be positive");
    const int n = sys.states();
    const int q = sys.inputs();
    detail::require(mult.M.rows() == sys.iqc_outputs() && mult.M.cols() == sys.iqc_outputs(),
                    "iqc_peak_lmi: M does not match y_xi");
    detail::require(mult.X.rows() == n && mult.X.cols() == n, "iqc_peak_lmi: X does not match the state");
    detail::require(opt.weights.size() == 0 || opt.weights.size() == q, "iqc_peak_lmi: one weight per channel");

    const auto& so = opt.synthesis;
    const double eps = so.strict_margin * detail::data_scale({&sys.A, &sys.B, &sys.C, &sys.D, &sys.Cz});
    MatrixXd H(sys.C.rows(), n + q);
    H << sys.C, sys.D;

    sdp::LmiProblem prob;
    prob.p_dim = n;
    auto diss = detail::dissipation_block(sys.A, sys.B, MatrixXd::Zero(n + q, n + q), 2.0 * alpha, eps);
    diss.F0 -= H.transpose() * mult.M * H;
    diss.scalar_terms.clear();
    auto out = detail::output_block(sys.Cz, alpha, eps);
    out.F0.bottomRightCorner(n, n) -= alpha * mult.X;

    std::vector<int> free_channels;
    std::vector<bool> zeroed(q, false);
    for (int c : opt.zero_channels) {
        detail::require(c >= 0 && c < q, "iqc_peak_lmi: zero channel out of range");
        zeroed[c] = true;
    }
    if (opt.structure == GammaStructure::tied) {
        detail::require(opt.zero_channels.empty(), "iqc_peak_lmi: a tied Gamma cannot zero channels");
        MatrixXd G = MatrixXd::Zero(n + q, n + q);
        G.bottomRightCorner(q, q).setIdentity();
        diss.scalar_terms.push_back({0, G});
        prob.n_scalars = 1;
        prob.cost = VectorXd::Ones(1);
    } else {
        for (int c = 0; c < q; ++c) {
            if (!zeroed[c]) {
                free_channels.push_back(c);
            }
        }
        prob.n_scalars = 1 + static_cast<int>(free_channels.size());
        prob.cost = VectorXd::Ones(prob.n_scalars);
        for (size_t i = 0; i < free_channels.size(); ++i) {
            const int c = free_channels[i];
            MatrixXd G = MatrixXd::Zero(n + q, n + q);
            G(n + c, n + c) = 1.0;
            diss.scalar_terms.push_back({static_cast<int>(i) + 1, G});
            if (opt.weights.size()) {
                prob.cost(static_cast<Eigen::Index>(i) + 1) = opt.weights(c);
            }
        }
    }
    prob.blocks.push_back(std::move(diss));
    prob.blocks.push_back(std::move(out));
    if (mult.X.cwiseAbs().maxCoeff() > 0.0) {
        sdp::LmiBlock shifted;
        shifted.name = "shifted_psd";
        shifted.F0 = -mult.X - eps * MatrixXd::Identity(n, n);
        shifted.p_terms.push_back({MatrixXd::Identity(n, n), MatrixXd::Identity(n, n)});
        prob.blocks.push_back(std::move(shifted));
    }

    const auto res = sdp::solve(prob, so.solver);
    if (res.status == sdp::Status::infeasible) {
        throw InfeasibleError("iqc_peak_lmi: infeasible for alpha = " + std::to_string(alpha));
    }
    if (!res.P.allFinite() || !res.y.allFinite()) {
        throw NumericalError("iqc_peak_lmi: solver returned non-finite values");
    }
    GainCertificate cert;
    cert.kind = CertificateKind::iqc;
    cert.P = detail::symmetrize(res.P);
    cert.lambda = alpha;
    cert.gamma = std::max(res.y(0), 0.0);
    cert.X = mult.X;
    cert.solver_status = sdp::to_string(res.status);
    VectorXd gdiag = VectorXd::Zero(q);
    if (opt.structure == GammaStructure::tied) {
        gdiag.setConstant(cert.gamma);
    } else {
        for (size_t i = 0; i < free_channels.size(); ++i) {
            gdiag(free_channels[i]) = std::max(res.y(static_cast<Eigen::Index>(i) + 1), 0.0);
        }
    }
    cert.Gamma = gdiag.asDiagonal();

    // Same bump strategy as the gain problems, applied to gamma and the free Gamma entries.
    auto check = check_iqc_certificate(cert, sys, mult, so.check_tolerance);
    double bump = 1e-10;
    for (int k = 0; k < 12 && !check.pass; ++k) {
        GainCertificate trial = cert;
        trial.gamma = cert.gamma * (1.0 + bump) + bump;
        VectorXd gd = cert.Gamma.diagonal();
        for (int c = 0; c < q; ++c) {
            if (!zeroed[c]) {
                gd(c) = gd(c) * (1.0 + bump) + bump;
            }
        }
        trial.Gamma = gd.asDiagonal();
        auto r2 = check_iqc_certificate(trial, sys, mult, so.check_tolerance);
        if (r2.pass) {
            cert = trial;
            check = r2;
            break;
        }
        bump *= 4.0;
    }
    cert.residuals = check.residuals;
    if (!check.pass) {
        throw NumericalError("iqc_peak_lmi: certificate failed independent verification (max residual " +
                             std::to_string(cert.max_residual()) + ")");
    }
    return cert;
}

/// Peak-to-peak gain implied by an IQC certificate: ||z_e|| <= sqrt(gamma lambda_max(Gamma) / 2) sup ||w||.
inline double iqc_implied_gain(const GainCertificate& cert)
{
    detail::require(cert.kind == CertificateKind::iqc, "iqc_implied_gain: not an IQC certificate");
    const double gmax = cert.Gamma.size() ? cert.Gamma.diagonal().maxCoeff() : 0.0;
    return std::sqrt(cert.gamma * gmax / 2.0);
}

struct IqcBoundTrajectory {
    VectorXd times;
    VectorXd delta;   ///< delta_xi
    VectorXd z_bound; ///< sqrt(alpha gamma delta_xi)
};

/**
 * @brief Propagates delta' = -2 alpha delta + ||w_xi||_Gamma^2 exactly under ZOH.
 *
 * `w_norm` carries the single channel ||w_xi(t)||_Gamma^2.
 */
inline IqcBoundTrajectory simulate_iqc_bound(const GainCertificate& cert, const SampledSignal& w_norm, double delta0,
                                             double dt, double t_final)
{
    detail::require(cert.kind == CertificateKind::iqc, "simulate_iqc_bound: not an IQC certificate");
    detail::require(delta0 >= 0.0, "simulate_iqc_bound: delta0 must be non-negative");
    detail::require(w_norm.channels() == 1, "simulate_iqc_bound: drive must be a single channel");
    detail::require(dt > 0.0 && t_final >= 0.0, "simulate_iqc_bound: invalid grid");
    const auto steps = static_cast<Eigen::Index>(std::llround(t_final / dt));
    detail::require(std::abs(steps * dt - t_final) <= 1e-9 * std::max(1.0, t_final),
                    "simulate_iqc_bound: t_final must be a multiple of dt");
    VectorXd drive(steps);
    for (Eigen::Index k = 0; k < steps; ++k) {
        drive(k) = w_norm.at(static_cast<double>(k) * dt)(0);
        detail::require(drive(k) >= 0.0, "simulate_iqc_bound: drive must be non-negative");
    }
    IqcBoundTrajectory out;
    out.times = VectorXd::LinSpaced(steps + 1, 0.0, static_cast<double>(steps) * dt);
    out.delta = propagate_scalar_bound(2.0 * cert.lambda, 1.0, delta0, drive, dt);
    out.z_bound = (cert.lambda * cert.gamma * out.delta.array()).sqrt();
    return out;
}

/// Error dynamics as an IQC system with xi = e, w_xi = r and no IQC output.
inline IqcSystem iqc_system_from_error(const ErrorDynamics& err)
{
    IqcSystem s;
    s.A = err.A;
    s.B = err.Be;
    s.C = MatrixXd::Zero(0, err.A.rows());
    s.D = MatrixXd::Zero(0, err.Be.cols());
    s.Cz = err.C;
    s.xi0 = err.e0;
    return s;
}

/// Worst violations of ||z_e||^2 / (alpha gamma) <= xi^T (P - X) xi <= delta along a sampled trajectory.
struct IqcChainReport {
    double output_violation = 0.0;
    double storage_violation = 0.0;

    [[nodiscard]] bool holds(double tol) const { return output_violation <= tol && storage_violation <= tol; }
};

/// `xi` holds one state per column, `delta` the matching bound samples.
inline IqcChainReport iqc_chain_check(const GainCertificate& cert, const IqcSystem& sys, const IqcMultiplier& mult,
                                      const MatrixXd& xi, const VectorXd& delta)
{
    detail::require(cert.kind == CertificateKind::iqc, "iqc_chain_check: not an IQC certificate");
    detail::require(xi.rows() == sys.states() && xi.cols() == delta.size(), "iqc_chain_check: sample size mismatch");
    const MatrixXd S = cert.P - mult.X;
    const double scale = cert.lambda * cert.gamma;
    IqcChainReport rep;
    for (Eigen::Index k = 0; k < xi.cols(); ++k) {
        const VectorXd x = xi.col(k);
        const double storage = x.dot(S * x);
        const double out = (sys.Cz * x).squaredNorm() / scale;
        rep.output_violation = std::max(rep.output_violation, out - storage);
        rep.storage_violation = std::max(rep.storage_violation, storage - delta(k));
    }
    return rep;
}

struct EquivalenceReport {
    double lambda = 0.0;
    double gamma_peak = 0.0;
    double gamma_iqc = 0.0;
    double implied_gain_iqc = 0.0; ///< sqrt(gamma_iqc * gamma_iqc / 2)
    double relative_gap = 0.0;
    bool pass = false;
};

/**
 * @brief Cross-checks the IQC analysis with M = 0, X = 0, alpha = lambda / 2, Gamma = gamma I
 * against the peak-gain certificate at lambda.
 *
 * With these choices the output block carries alpha P = (lambda / 2) P, so
 * gamma_iqc = sqrt(2) gamma_peak; both certify the same peak gain, which is
 * what is compared.
 */
inline EquivalenceReport iqc_equivalence_check(const ErrorDynamics& err, double lambda,
                                                 const SynthesisOptions& opt = {},
                                                 const GainCertificate* peak = nullptr)
{
    detail::require_lambda(lambda);
    if (!is_hurwitz(err.A)) {
        throw InvalidArgument("iqc_equivalence_check: A is not Hurwitz");
    }
    EquivalenceReport rep;
    rep.lambda = lambda;
    if (peak) {
        detail::require(peak->kind == CertificateKind::peak && std::abs(peak->lambda - lambda) <= 1e-12 * lambda,
                        "iqc_equivalence_check: supplied certificate does not match lambda");
        rep.gamma_peak = peak->gamma;
    } else {
        rep.gamma_peak = peak_gain_lmi(err, lambda, opt).gamma;
    }
    const auto sys = iqc_system_from_error(err);
    IqcOptions io;
    io.structure = GammaStructure::tied;
    io.synthesis = opt;
    const auto cert = iqc_peak_lmi(sys, trivial_multiplier(0, sys.states()), lambda / 2.0, io);
    rep.gamma_iqc = cert.gamma;
    rep.implied_gain_iqc = iqc_implied_gain(cert);
    rep.relative_gap = std::abs(rep.implied_gain_iqc - rep.gamma_peak) / rep.gamma_peak;
    rep.pass = rep.relative_gap <= 0.01;
    return rep;
}

} // namespace rompc
