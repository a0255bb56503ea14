#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rompc/error.hpp"
#include "rompc/lti.hpp"
#include "rompc/reduction.hpp"
#include "rompc/sdp.hpp"

namespace rompc {

enum class CertificateKind { peak, filtered_peak, iqc };

inline const char* to_string(CertificateKind k)
{
    switch (k) {
    case CertificateKind::peak: return "peak";
    case CertificateKind::filtered_peak: return "filtered-peak";
    case CertificateKind::iqc: return "iqc";
    }
    return "unknown";
}

/// Largest eigenvalue of one LMI block written in "<= 0" form.
struct BlockResidual {
    std::string name;
    double value = 0.0;
};

struct LambdaSample {
    double lambda = 0.0;
    double gamma = std::numeric_limits<double>::quiet_NaN(); ///< NaN when infeasible
    std::string status;
};

/**
 * @brief Solved gain certificate (P, lambda, gamma) with its verification residuals.
 *
 * For kind = iqc, `lambda` stores alpha and Gamma / X hold the multiplier data.
 */
struct GainCertificate {
    CertificateKind kind = CertificateKind::peak;
    MatrixXd P;
    double lambda = 0.0;
    double gamma = 0.0;
    std::vector<BlockResidual> residuals;
    std::vector<LambdaSample> grid_profile;
    MatrixXd Gamma;
    MatrixXd X;
    std::string solver_status;

    [[nodiscard]] double max_residual() const
    {
        double r = -std::numeric_limits<double>::infinity();
        for (const auto& b : residuals) {
            r = std::max(r, b.value);
        }
        return r;
    }
};

/**
 * @brief Error dynamics augmented with a bounding filter:
 *
 *   d chi/dt = A chi + B r,  r_psi = Cpsi chi + D r,  z_e = Cz chi,  chi(0) = chi0
 */
struct AugmentedErrorSystem {
    MatrixXd A;
    MatrixXd B;
    MatrixXd Cpsi;
    MatrixXd D;
    MatrixXd Cz;
    VectorXd chi0;

    [[nodiscard]] int states() const { return static_cast<int>(A.rows()); }
    [[nodiscard]] int drive_size() const { return static_cast<int>(B.cols()); }
};

struct CertificateCheck {
    std::vector<BlockResidual> residuals;
    bool pass = false;
    double tolerance = 1e-7;
};

struct SynthesisOptions {
    /// Blocks are imposed with margin eps = strict_margin * data scale.
    double strict_margin = 1e-9;
    double check_tolerance = 1e-7;
    sdp::Options solver;
};

enum class LinesearchObjective { gamma, gamma_over_sqrt_lambda };

namespace detail {

inline double max_eig(const MatrixXd& M)
{
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(M), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(es.eigenvalues().size() - 1);
}

inline double min_eig(const MatrixXd& M)
{
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(M), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

inline double data_scale(std::initializer_list<const MatrixXd*> mats)
{
    double s = 1.0;
    for (const auto* m : mats) {
        if (m->size() > 0) {
            s = std::max(s, m->cwiseAbs().maxCoeff());
        }
    }
    return s;
}

/// Dissipation block of the weighted gain problem in ">= 0" form:
///   -[lam P + A^T P + P A, P B; B^T P, 0] + gamma * Gw >= eps I
inline sdp::LmiBlock dissipation_block(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Gw, double lambda,
                                       double eps)
{
    const auto n = A.rows();
    const auto q = B.cols();
    MatrixXd U = MatrixXd::Zero(n, n + q);
    U.leftCols(n).setIdentity();
    MatrixXd Vp(n, n + q);
    Vp << A + 0.5 * lambda * MatrixXd::Identity(n, n), B;
    sdp::LmiBlock blk;
    blk.name = "dissipation";
    blk.F0 = -eps * MatrixXd::Identity(n + q, n + q);
    blk.p_terms.push_back({U, -Vp});
    blk.p_terms.push_back({Vp, -U});
    blk.scalar_terms.push_back({0, Gw});
    return blk;
}

/// Output block in ">= 0" form: [gamma I, C; C^T, lam P] >= eps I.
inline sdp::LmiBlock output_block(const MatrixXd& C, double lambda, double eps)
{
    const auto nz = C.rows();
    const auto n = C.cols();
    sdp::LmiBlock blk;
    blk.name = "output";
    blk.F0 = MatrixXd::Zero(nz + n, nz + n);
    blk.F0.topRightCorner(nz, n) = C;
    blk.F0.bottomLeftCorner(n, nz) = C.transpose();
    blk.F0.diagonal().array() -= eps;
    MatrixXd L = MatrixXd::Zero(n, nz + n);
    L.rightCols(n).setIdentity();
    blk.p_terms.push_back({L, lambda * L});
    MatrixXd G = MatrixXd::Zero(nz + n, nz + n);
    G.topLeftCorner(nz, nz).setIdentity();
    blk.scalar_terms.push_back({0, G});
    return blk;
}

inline sdp::LmiProblem gain_problem(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Gw, const MatrixXd& C,
                                    double lambda, double eps)
{
    sdp::LmiProblem prob;
    prob.p_dim = static_cast<int>(A.rows());
    prob.n_scalars = 1;
    prob.cost = VectorXd::Ones(1);
    prob.blocks.push_back(dissipation_block(A, B, Gw, lambda, eps));
    prob.blocks.push_back(output_block(C, lambda, eps));
    return prob;
}

/// Orthonormal basis of the orthogonal complement of span(N).
inline MatrixXd complement_basis(const MatrixXd& N, Eigen::Index dim)
{
    if (N.cols() == 0) {
        return MatrixXd::Identity(dim, dim);
    }
    Eigen::JacobiSVD<MatrixXd> svd(N, Eigen::ComputeFullU);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        rank += sv(i) > 1e-10 * sv(0) ? 1 : 0;
    }
    return svd.matrixU().rightCols(dim - rank);
}

/// Restricts P = T Pt T^T and compresses block b by the congruence S_b.
inline sdp::LmiProblem restrict_problem(const sdp::LmiProblem& prob, const MatrixXd& T,
                                        const std::vector<MatrixXd>& S)
{
    sdp::LmiProblem out;
    out.p_dim = static_cast<int>(T.cols());
    out.n_scalars = prob.n_scalars;
    out.cost = prob.cost;
    for (size_t b = 0; b < prob.blocks.size(); ++b) {
        const auto& blk = prob.blocks[b];
        const MatrixXd& Sb = S[b];
        sdp::LmiBlock r;
        r.name = blk.name;
        r.F0 = Sb.transpose() * blk.F0 * Sb;
        for (const auto& t : blk.p_terms) {
            r.p_terms.push_back({T.transpose() * t.L * Sb, T.transpose() * t.R * Sb});
        }
        for (const auto& g : blk.scalar_terms) {
            r.scalar_terms.push_back({g.index, Sb.transpose() * g.G * Sb});
        }
        out.blocks.push_back(std::move(r));
    }
    return out;
}

/**
 * @brief Directions every feasible certificate of a filtered problem must annihilate.
 *
 * For a constant drive v whose filtered output has zero steady state, the
 * steady state chi_v = -A^-1 B v forces V(chi_v) = 0, so P chi_v = 0, and the
 * dissipation block vanishes along [chi_v; v]. Returns (N, N2) holding these
 * directions as columns; both are empty for filters without such drives.
 */
inline std::pair<MatrixXd, MatrixXd> steady_state_face(const AugmentedErrorSystem& aug, int n_w)
{
    const auto n = aug.A.rows();
    const auto q = aug.B.cols();
    const Eigen::PartialPivLU<MatrixXd> lu(aug.A);
    const MatrixXd Xss = -lu.solve(aug.B); // chi_ss = Xss v
    const MatrixXd G0 = aug.Cpsi * Xss + aug.D;
    const MatrixXd G0v = G0.rightCols(q - n_w);
    if (G0v.cols() == 0) {
        return {MatrixXd(n, 0), MatrixXd(n + q, 0)};
    }
    Eigen::JacobiSVD<MatrixXd> svd(G0v, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double top = std::max(sv.size() ? sv(0) : 0.0, 1.0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        rank += sv(i) > 1e-9 * top ? 1 : 0;
    }
    const MatrixXd V0 = svd.matrixV().rightCols(G0v.cols() - rank);
    MatrixXd drives = MatrixXd::Zero(q, V0.cols());
    drives.bottomRows(q - n_w) = V0;
    MatrixXd N = Xss * drives;
    MatrixXd N2(n + q, drives.cols());
    N2 << N, drives;
    return {N, N2};
}

inline void require_lambda(double lambda)
{
    require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive and finite");
}

/// Raises gamma until the independent check passes; throws if that never happens.
inline void polish_gamma(GainCertificate& cert, const std::function<CertificateCheck(const GainCertificate&)>& check)
{
    auto res = check(cert);
    double bump = 1e-10;
    for (int k = 0; k < 12 && !res.pass; ++k) {
        GainCertificate trial = cert;
        trial.gamma = cert.gamma * (1.0 + bump) + bump;
        auto r2 = check(trial);
        if (r2.pass) {
            cert = trial;
            res = r2;
            break;
        }
        bump *= 4.0;
    }
    cert.residuals = res.residuals;
    if (!res.pass) {
        throw NumericalError("certificate failed independent verification (max residual " +
                             std::to_string(cert.max_residual()) + ")");
    }
}

inline GainCertificate solve_gain(const sdp::LmiProblem& prob, CertificateKind kind, double lambda,
                                  const SynthesisOptions& opt,
                                  const std::function<CertificateCheck(const GainCertificate&)>& check,
                                  const MatrixXd& T = MatrixXd())
{
    const auto res = sdp::solve(prob, opt.solver);
    if (res.status == sdp::Status::infeasible) {
        throw InfeasibleError(std::string("gain LMI infeasible for lambda = ") + std::to_string(lambda));
    }
    if (!res.P.allFinite() || !res.y.allFinite()) {
        throw NumericalError("gain LMI solver returned non-finite values");
    }
    GainCertificate cert;
    cert.kind = kind;
    cert.P = T.size() ? symmetrize(T * res.P * T.transpose()) : symmetrize(res.P);
    cert.lambda = lambda;
    cert.gamma = std::max(res.y(0), 0.0);
    cert.solver_status = sdp::to_string(res.status);
    polish_gamma(cert, check);
    return cert;
}

} // namespace detail

/// Re-evaluates the peak-gain blocks for (P, lambda, gamma) from the plant matrices.
inline CertificateCheck check_certificate(const GainCertificate& cert, const ErrorDynamics& err,
                                          double tolerance = 1e-7)
{
    const auto n = err.A.rows();
    const auto q = err.Be.cols();
    const auto nz = err.C.rows();
    const MatrixXd& P = cert.P;
    const double lam = cert.lambda;
    const double g = cert.gamma;
    MatrixXd b1(n + q, n + q);
    b1 << lam * P + err.A.transpose() * P + P * err.A, P * err.Be, err.Be.transpose() * P,
        -g * MatrixXd::Identity(q, q);
    MatrixXd b2(nz + n, nz + n);
    b2 << g * MatrixXd::Identity(nz, nz), err.C, err.C.transpose(), lam * P;
    CertificateCheck out;
    out.tolerance = tolerance;
    out.residuals.push_back({"dissipation", detail::max_eig(b1)});
    out.residuals.push_back({"output", -detail::min_eig(b2)});
    out.residuals.push_back({"psd", P.size() ? -detail::min_eig(P) : 0.0});
    out.pass = cert.lambda > 0.0 && cert.gamma > 0.0;
    for (const auto& r : out.residuals) {
        out.pass = out.pass && r.value <= tolerance;
    }
    return out;
}

/// Re-evaluates the filtered-gain blocks for (P, lambda, gamma) from the augmented matrices.
inline CertificateCheck check_certificate(const GainCertificate& cert, const AugmentedErrorSystem& aug,
                                          double tolerance = 1e-7)
{
    const auto n = aug.A.rows();
    const auto q = aug.B.cols();
    const auto nz = aug.Cz.rows();
    const MatrixXd& P = cert.P;
    const double lam = cert.lambda;
    const double g = cert.gamma;
    MatrixXd H(aug.D.rows(), n + q);
    H << aug.Cpsi, aug.D;
    MatrixXd b1(n + q, n + q);
    b1 << lam * P + aug.A.transpose() * P + P * aug.A, P * aug.B, aug.B.transpose() * P, MatrixXd::Zero(q, q);
    b1 -= g * H.transpose() * H;
    MatrixXd b2(nz + n, nz + n);
    b2 << g * MatrixXd::Identity(nz, nz), aug.Cz, aug.Cz.transpose(), lam * P;
    CertificateCheck out;
    out.tolerance = tolerance;
    out.residuals.push_back({"dissipation", detail::max_eig(b1)});
    out.residuals.push_back({"output", -detail::min_eig(b2)});
    out.residuals.push_back({"psd", P.size() ? -detail::min_eig(P) : 0.0});
    out.pass = cert.lambda > 0.0 && cert.gamma > 0.0;
    for (const auto& r : out.residuals) {
        out.pass = out.pass && r.value <= tolerance;
    }
    return out;
}

/**
 * @brief Minimal peak-to-peak gain gamma for decay rate lambda:
 *
 *   min gamma  s.t.  [lam P + A^T P + P A, P Be; Be^T P, -gamma I] <= 0,
 *                    [gamma I, C; C^T, lam P] >= 0.
 *
 * @throws InfeasibleError if no certificate exists for this lambda.
 */
inline GainCertificate peak_gain_lmi(const ErrorDynamics& err, double lambda, const SynthesisOptions& opt = {})
{
    detail::require_lambda(lambda);
    detail::require(err.Be.rows() == err.A.rows() && err.C.cols() == err.A.cols(), "peak_gain_lmi: dimension mismatch");
    if (!is_hurwitz(err.A)) {
        throw InvalidArgument("peak_gain_lmi: A is not Hurwitz");
    }
    const auto q = err.Be.cols();
    const auto n = err.A.rows();
    MatrixXd Gw = MatrixXd::Zero(n + q, n + q);
    Gw.bottomRightCorner(q, q).setIdentity();
    const double eps = opt.strict_margin * detail::data_scale({&err.A, &err.Be, &err.C});
    const auto prob = detail::gain_problem(err.A, err.Be, Gw, err.C, lambda, eps);
    return detail::solve_gain(prob, CertificateKind::peak, lambda, opt, [&](const GainCertificate& c) {
        return check_certificate(c, err, opt.check_tolerance);
    });
}

/**
 * @brief Minimal output-to-output gain from r_psi to z_e for decay rate lambda:
 *
 *   min gamma  s.t.  [lam P + A^T P + P A, P B; B^T P, 0] - gamma [Cpsi D]^T [Cpsi D] <= 0,
 *                    [gamma I, Cz; Cz^T, lam P] >= 0.
 */
inline GainCertificate filtered_peak_gain_lmi(const AugmentedErrorSystem& aug, double lambda,
                                              const SynthesisOptions& opt = {}, int n_w = 0)
{
    detail::require_lambda(lambda);
    const auto n = aug.A.rows();
    const auto q = aug.B.cols();
    detail::require(aug.A.cols() == n && aug.B.rows() == n && aug.Cpsi.cols() == n && aug.D.cols() == q &&
                        aug.Cpsi.rows() == aug.D.rows() && aug.Cz.cols() == n,
                    "filtered_peak_gain_lmi: dimension mismatch");
    if (!is_hurwitz(aug.A)) {
        throw InvalidArgument("filtered_peak_gain_lmi: augmented A is not Hurwitz");
    }
    MatrixXd H(aug.D.rows(), n + q);
    H << aug.Cpsi, aug.D;
    const MatrixXd Gw = H.transpose() * H;
    const double eps = opt.strict_margin * detail::data_scale({&aug.A, &aug.B, &aug.Cz, &aug.Cpsi, &aug.D});
    auto prob = detail::gain_problem(aug.A, aug.B, Gw, aug.Cz, lambda, eps);

    // Drives the filter removes at steady state leave a face on which every
    // certificate is singular; restrict to it so the solver sees an interior.
    const auto [N, N2] = detail::steady_state_face(aug, n_w);
    MatrixXd T = MatrixXd::Identity(n, n);
    if (N.cols() > 0) {
        const double dc = (aug.Cz * N).cwiseAbs().maxCoeff();
        if (dc > 1e-8 * std::max(1.0, N.cwiseAbs().maxCoeff())) {
            throw InfeasibleError("filtered_peak_gain_lmi: z_e responds to a constant drive the filter removes");
        }
        T = detail::complement_basis(N, n);
        const auto nz = aug.Cz.rows();
        MatrixXd Sout = MatrixXd::Zero(nz + n, nz + T.cols());
        Sout.topLeftCorner(nz, nz).setIdentity();
        Sout.bottomRightCorner(n, T.cols()) = T;
        prob = detail::restrict_problem(prob, T, {detail::complement_basis(N2, n + q), Sout});
    }
    return detail::solve_gain(prob, CertificateKind::filtered_peak, lambda, opt, [&](const GainCertificate& c) {
        return check_certificate(c, aug, opt.check_tolerance);
    }, T);
}

/**
 * @brief Smallest t such that the gain blocks hold with margin -t at fixed (lambda, gamma).
 *
 * t <= 0 means (lambda, gamma) is feasible. P is the only matrix variable.
 */
inline double feasibility_margin(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Gw, const MatrixXd& C,
                                 double lambda, double gamma, const sdp::Options& solver = {})
{
    auto prob = detail::gain_problem(A, B, Gw, C, lambda, 0.0);
    for (auto& blk : prob.blocks) {
        // gamma is fixed: move its term into the constant and reuse the slot for t.
        blk.F0 += gamma * blk.scalar_terms[0].G;
        blk.scalar_terms[0].G = MatrixXd::Identity(blk.size(), blk.size());
    }
    sdp::LmiBlock floor_blk;
    floor_blk.name = "floor";
    floor_blk.F0 = MatrixXd::Ones(1, 1);
    floor_blk.scalar_terms.push_back({0, MatrixXd::Ones(1, 1)});
    prob.blocks.push_back(floor_blk);
    const auto res = sdp::solve(prob, solver);
    if (res.status == sdp::Status::infeasible || !res.y.allFinite()) {
        throw NumericalError("feasibility_margin: solver failed");
    }
    return res.y(0);
}

inline double peak_feasibility_margin(const ErrorDynamics& err, double lambda, double gamma)
{
    const auto q = err.Be.cols();
    const auto n = err.A.rows();
    MatrixXd Gw = MatrixXd::Zero(n + q, n + q);
    Gw.bottomRightCorner(q, q).setIdentity();
    return feasibility_margin(err.A, err.Be, Gw, err.C, lambda, gamma);
}

/// Linear grid of `count` points strictly inside (0, 2 |abscissa|).
inline std::vector<double> default_lambda_grid(double abscissa, int count = 10)
{
    detail::require(abscissa < 0.0, "default_lambda_grid: system is not Hurwitz");
    detail::require(count >= 1, "default_lambda_grid: count must be positive");
    std::vector<double> grid;
    const double top = 2.0 * std::abs(abscissa);
    for (int k = 1; k <= count; ++k) {
        grid.push_back(top * static_cast<double>(k) / static_cast<double>(count + 1));
    }
    return grid;
}

/// Inclusive linear grid of n points from a to b.
inline std::vector<double> linspace(double a, double b, int n)
{
    detail::require(n >= 1, "linspace: n must be positive");
    std::vector<double> out;
    for (int k = 0; k < n; ++k) {
        out.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1));
    }
    return out;
}

inline double linesearch_score(const GainCertificate& c, LinesearchObjective obj)
{
    return obj == LinesearchObjective::gamma ? c.gamma : c.gamma / std::sqrt(c.lambda);
}

/**
 * @brief Solves the gain problem on every grid point and returns the best certificate.
 *
 * Ties (relative 1e-9) go to the larger lambda. The full profile is stored in grid_profile.
 *
 * @throws InfeasibleError if no grid point yields a certificate.
 */
inline GainCertificate lambda_linesearch(const std::function<GainCertificate(double)>& solve_at,
                                         const std::vector<double>& grid,
                                         LinesearchObjective objective = LinesearchObjective::gamma)
{
    detail::require(!grid.empty(), "lambda_linesearch: empty grid");
    for (double l : grid) {
        detail::require_lambda(l);
    }
    std::optional<GainCertificate> best;
    std::vector<LambdaSample> profile;
    for (double l : grid) {
        try {
            auto cert = solve_at(l);
            profile.push_back({l, cert.gamma, cert.solver_status});
            if (!best) {
                best = std::move(cert);
                continue;
            }
            const double s_new = linesearch_score(cert, objective);
            const double s_old = linesearch_score(*best, objective);
            const bool tie = std::abs(s_new - s_old) <= 1e-9 * std::max(std::abs(s_old), 1e-300);
            if (s_new < s_old && !tie) {
                best = std::move(cert);
            } else if (tie && cert.lambda > best->lambda) {
                best = std::move(cert);
            }
        } catch (const InfeasibleError&) {
            profile.push_back({l, std::numeric_limits<double>::quiet_NaN(), "infeasible"});
        } catch (const NumericalError& e) {
            profile.push_back({l, std::numeric_limits<double>::quiet_NaN(), std::string("failed: ") + e.what()});
        }
    }
    if (!best) {
        throw InfeasibleError("lambda_linesearch: every grid point is infeasible");
    }
    best->grid_profile = profile;
    return *best;
}

inline GainCertificate lambda_linesearch(const ErrorDynamics& err, const std::vector<double>& grid,
                                         LinesearchObjective objective = LinesearchObjective::gamma,
                                         const SynthesisOptions& opt = {})
{
    return lambda_linesearch([&](double l) { return peak_gain_lmi(err, l, opt); }, grid, objective);
}

inline GainCertificate lambda_linesearch(const AugmentedErrorSystem& aug, const std::vector<double>& grid,
                                         LinesearchObjective objective = LinesearchObjective::gamma,
                                         const SynthesisOptions& opt = {})
{
    return lambda_linesearch([&](double l) { return filtered_peak_gain_lmi(aug, l, opt); }, grid, objective);
}

} // namespace rompc
