#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "rompc/error.hpp"
#include "rompc/lti.hpp"
#include "rompc/reduction.hpp"
#include "rompc/synthesis.hpp"

namespace rompc {

/**
 * @brief Stable filter psi' = Apsi psi + Bpsi r, r_psi = Cpsi psi + Dpsi r with psi(0) = 0.
 *
 * The first n_w entries of r (the disturbance) bypass the filter state and
 * appear unchanged in the first n_w outputs.
 */
struct BoundingFilter {
    MatrixXd Apsi;
    MatrixXd Bpsi;
    MatrixXd Cpsi;
    MatrixXd Dpsi;
    double omega_c = 0.0;
    VectorXd scales;
    int n_w = 0;

    [[nodiscard]] int states() const { return static_cast<int>(Apsi.rows()); }
    [[nodiscard]] int outputs() const { return static_cast<int>(Dpsi.rows()); }
    [[nodiscard]] int inputs() const { return static_cast<int>(Dpsi.cols()); }

    /// Checks the disturbance pass-through structure and stability.
    void validate() const
    {
        const auto np = Apsi.rows();
        const auto q = Dpsi.cols();
        detail::require(Apsi.cols() == np && Bpsi.rows() == np && Bpsi.cols() == q && Cpsi.cols() == np &&
                            Cpsi.rows() == Dpsi.rows(),
                        "BoundingFilter: dimension mismatch");
        detail::require(n_w >= 0 && n_w <= q && n_w <= Dpsi.rows(), "BoundingFilter: bad disturbance count");
        detail::require(is_hurwitz(Apsi), "BoundingFilter: Apsi must be Hurwitz");
        const double tol = 1e-12;
        detail::require(n_w == 0 || np == 0 || Bpsi.leftCols(n_w).cwiseAbs().maxCoeff() <= tol,
                        "BoundingFilter: disturbance must not drive the filter state");
        if (n_w > 0) {
            MatrixXd top(n_w, np + q);
            top << Cpsi.topRows(n_w), Dpsi.topRows(n_w);
            MatrixXd expect = MatrixXd::Zero(n_w, np + q);
            expect.block(0, np, n_w, n_w).setIdentity();
            detail::require((top - expect).cwiseAbs().maxCoeff() <= tol,
                            "BoundingFilter: top outputs must pass the disturbance through");
            if (Dpsi.rows() > n_w) {
                detail::require(Dpsi.bottomLeftCorner(Dpsi.rows() - n_w, n_w).cwiseAbs().maxCoeff() <= tol,
                                "BoundingFilter: lower outputs must not see the disturbance directly");
            }
        }
    }
};

/// Pass-through filter r_psi = r (no state).
inline BoundingFilter identity_filter(int drive_size, int n_w)
{
    BoundingFilter f;
    f.Apsi = MatrixXd::Zero(0, 0);
    f.Bpsi = MatrixXd::Zero(0, drive_size);
    f.Cpsi = MatrixXd::Zero(drive_size, 0);
    f.Dpsi = MatrixXd::Identity(drive_size, drive_size);
    f.n_w = n_w;
    f.scales = VectorXd::Ones(drive_size - n_w);
    return f;
}

/**
 * @brief First-order high-pass on every reduced-state and input channel of r = [w; x_r; u].
 *
 * Channel i: p_i' = -omega_c p_i + omega_c v_i, output (v_i - p_i) / s_i.
 * Disturbance channels pass straight through.
 */
inline BoundingFilter build_highpass_filter(const ReducedModel& rom, double omega_c, const VectorXd& scales, int n_w)
{
    detail::require(omega_c > 0.0 && std::isfinite(omega_c), "build_highpass_filter: omega_c must be positive");
    detail::require(n_w >= 0, "build_highpass_filter: n_w must be non-negative");
    const int nv = rom.order() + static_cast<int>(rom.Br.cols());
    detail::require(scales.size() == nv, "build_highpass_filter: one scale per reduced state and input required");
    detail::require((scales.array() > 0.0).all() && scales.allFinite(), "build_highpass_filter: scales must be positive");
    const int q = n_w + nv;
    BoundingFilter f;
    f.omega_c = omega_c;
    f.scales = scales;
    f.n_w = n_w;
    f.Apsi = -omega_c * MatrixXd::Identity(nv, nv);
    f.Bpsi = MatrixXd::Zero(nv, q);
    f.Bpsi.rightCols(nv) = omega_c * MatrixXd::Identity(nv, nv);
    const VectorXd inv = scales.cwiseInverse();
    f.Cpsi = MatrixXd::Zero(q, nv);
    f.Cpsi.bottomRows(nv) = (-inv).asDiagonal();
    f.Dpsi = MatrixXd::Zero(q, q);
    f.Dpsi.topLeftCorner(n_w, n_w).setIdentity();
    f.Dpsi.bottomRightCorner(nv, nv) = inv.asDiagonal();
    f.validate();
    return f;
}

inline AugmentedErrorSystem build_augmented_system(const ErrorDynamics& err, const BoundingFilter& filter)
{
    filter.validate();
    detail::require(filter.inputs() == err.drive_size(), "build_augmented_system: filter input size must match r");
    const int n = err.states();
    const int np = filter.states();
    const int q = err.drive_size();
    AugmentedErrorSystem aug;
    aug.A = MatrixXd::Zero(n + np, n + np);
    aug.A.topLeftCorner(n, n) = err.A;
    aug.A.bottomRightCorner(np, np) = filter.Apsi;
    aug.B.resize(n + np, q);
    aug.B << err.Be, filter.Bpsi;
    aug.Cpsi.resize(filter.outputs(), n + np);
    aug.Cpsi << MatrixXd::Zero(filter.outputs(), n), filter.Cpsi;
    aug.D = filter.Dpsi;
    aug.Cz.resize(err.C.rows(), n + np);
    aug.Cz << err.C, MatrixXd::Zero(err.C.rows(), np);
    aug.chi0.resize(n + np);
    aug.chi0 << err.e0, VectorXd::Zero(np);
    return aug;
}

/**
 * @brief Exact solution of delta' = -lambda delta + gain * q on one step with constant q.
 */
inline double scalar_bound_step(double delta, double lambda, double gain, double q, double h)
{
    const double decay = std::exp(-lambda * h);
    return decay * delta + (-std::expm1(-lambda * h)) / lambda * gain * q;
}

/// Propagates delta' = -lambda delta + gain * q_k with q_k held on [k h, (k+1) h).
inline VectorXd propagate_scalar_bound(double lambda, double gain, double delta0, const VectorXd& drive, double h)
{
    detail::require(lambda > 0.0 && gain >= 0.0 && h > 0.0, "propagate_scalar_bound: invalid parameters");
    detail::require(delta0 >= 0.0, "propagate_scalar_bound: delta0 must be non-negative");
    VectorXd delta(drive.size() + 1);
    delta(0) = delta0;
    for (Eigen::Index k = 0; k < drive.size(); ++k) {
        delta(k + 1) = scalar_bound_step(delta(k), lambda, gain, drive(k), h);
    }
    return delta;
}

/**
 * @brief Implementable robust prediction: ROM, nominal filter and the scalar bound.
 *
 * The bound is delta' = -lambda delta + gamma (||r_psi_bar||^2 + wbar^2) with
 * r_bar = [0; x_r; u], and the output tube radius is delta_z = sqrt(gamma lambda delta).
 */
struct RobustPredictor {
    ReducedModel rom;
    BoundingFilter filter;
    GainCertificate cert;
    double wbar = 0.0;
    double delta0 = 0.0;

    [[nodiscard]] double tube_gain() const { return cert.gamma * cert.lambda; }
    [[nodiscard]] int n_u() const { return static_cast<int>(rom.Br.cols()); }

    /// Joint nominal dynamics of [x_r; psi_bar] driven by u.
    [[nodiscard]] LtiSystem nominal_system() const
    {
        const int nr = rom.order();
        const int np = filter.states();
        const int nu = n_u();
        const int nw = filter.n_w;
        MatrixXd A = MatrixXd::Zero(nr + np, nr + np);
        A.topLeftCorner(nr, nr) = rom.Ar;
        A.bottomLeftCorner(np, nr) = filter.Bpsi.middleCols(nw, nr);
        A.bottomRightCorner(np, np) = filter.Apsi;
        MatrixXd B(nr + np, nu);
        B << rom.Br, filter.Bpsi.rightCols(nu);
        MatrixXd C(rom.Cr.rows(), nr + np);
        C << rom.Cr, MatrixXd::Zero(rom.Cr.rows(), np);
        VectorXd x0(nr + np);
        x0 << rom.xr0, VectorXd::Zero(np);
        return LtiSystem(A, B, MatrixXd::Zero(nr + np, 0), C, x0);
    }

    /// Filter output matrices: r_psi_bar = Hx [x_r; psi] + Hu u.
    [[nodiscard]] std::pair<MatrixXd, MatrixXd> drive_maps() const
    {
        const int nr = rom.order();
        const int np = filter.states();
        const int nw = filter.n_w;
        const int nu = n_u();
        MatrixXd Hx(filter.outputs(), nr + np);
        Hx << filter.Dpsi.middleCols(nw, nr), filter.Cpsi;
        MatrixXd Hu = filter.Dpsi.rightCols(nu);
        return {Hx, Hu};
    }
};

inline RobustPredictor make_robust_predictor(const LtiSystem& sys, const ReducedModel& rom,
                                             const BoundingFilter& filter, const GainCertificate& cert, double wbar)
{
    filter.validate();
    detail::require(wbar >= 0.0, "make_robust_predictor: wbar must be non-negative");
    detail::require(filter.inputs() == sys.disturbances() + rom.order() + sys.inputs(),
                    "make_robust_predictor: filter does not match the lumped input");
    detail::require(filter.n_w == sys.disturbances(), "make_robust_predictor: filter disturbance count mismatch");
    detail::require(cert.P.rows() == sys.states() + filter.states(),
                    "make_robust_predictor: certificate size does not match plant plus filter");
    if (filter.states() > 0) {
        detail::require(cert.kind == CertificateKind::filtered_peak,
                        "make_robust_predictor: a dynamic filter needs a filtered-peak certificate");
    }
    RobustPredictor pred;
    pred.rom = rom;
    pred.filter = filter;
    pred.cert = cert;
    pred.wbar = wbar;
    VectorXd chi0 = VectorXd::Zero(cert.P.rows());
    chi0.head(sys.states()) = residual_projector(rom) * sys.x0;
    pred.delta0 = std::max(0.0, chi0.dot(cert.P * chi0));
    return pred;
}

struct BoundTrajectory {
    VectorXd times;
    MatrixXd xr;
    MatrixXd psi;
    MatrixXd zr;
    VectorXd drive;     ///< held drive ||r_psi_bar||^2 + wbar^2 per step (size K-1)
    VectorXd delta_chi; ///< one entry per time
    VectorXd delta_z;   ///< one entry per time
};

/**
 * @brief Propagates the robust prediction under u on a grid of step dt / refine.
 *
 * Each step holds the drive at the larger of its two endpoint values (left
 * value and left limit at the right end).
 */
inline BoundTrajectory simulate_bound(const RobustPredictor& pred, const SampledSignal& u, double dt, double t_final,
                                      int refine = 1)
{
    detail::require(refine >= 1, "simulate_bound: refine must be >= 1");
    detail::require(u.channels() == pred.n_u(), "simulate_bound: u has wrong channel count");
    const double h = dt / refine;
    const auto nominal = pred.nominal_system();
    const auto traj = simulate(nominal, u, h, t_final);
    const auto [Hx, Hu] = pred.drive_maps();
    const int nr = pred.rom.order();
    const auto K = traj.times.size();

    BoundTrajectory out;
    out.times = traj.times;
    out.xr = traj.states.topRows(nr);
    out.psi = traj.states.bottomRows(pred.filter.states());
    out.zr = traj.outputs;
    out.drive.resize(std::max<Eigen::Index>(K - 1, 0));
    out.delta_chi.resize(K);
    out.delta_z.resize(K);
    out.delta_chi(0) = pred.delta0;
    const double w2 = pred.wbar * pred.wbar;
    const double lam = pred.cert.lambda;
    const double gam = pred.cert.gamma;
    for (Eigen::Index k = 0; k + 1 < K; ++k) {
        const VectorXd uk = u.at(out.times(k));
        const double left = (Hx * traj.states.col(k) + Hu * uk).squaredNorm();
        const double right = (Hx * traj.states.col(k + 1) + Hu * uk).squaredNorm();
        out.drive(k) = std::max(left, right) + w2;
        out.delta_chi(k + 1) = scalar_bound_step(out.delta_chi(k), lam, gam, out.drive(k), h);
    }
    for (Eigen::Index k = 0; k < K; ++k) {
        if (!(out.delta_chi(k) >= 0.0)) {
            throw NumericalError("simulate_bound: bound became negative or non-finite");
        }
        out.delta_z(k) = std::sqrt(gam * lam * out.delta_chi(k));
    }
    return out;
}

struct ContainmentReport {
    double max_margin = 0.0;   ///< max_t ||z - z_r|| - delta_z
    double peak_delta_z = 0.0;
    double peak_error = 0.0;
    bool pass = false;
};

/**
 * @brief Simulates plant and predictor on the refined grid and compares ||z - z_r|| to delta_z.
 */
inline ContainmentReport containment_check(const LtiSystem& sys, const RobustPredictor& pred, const SampledSignal& u,
                                           const SampledSignal& w, double dt, double t_final, int refine = 4)
{
    const double h = dt / refine;
    const auto plant = simulate(sys, u, w, h, t_final);
    const auto tube = simulate_bound(pred, u, dt, t_final, refine);
    ContainmentReport rep;
    rep.max_margin = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < plant.times.size(); ++k) {
        const double err = (plant.outputs.col(k) - tube.zr.col(k)).norm();
        rep.max_margin = std::max(rep.max_margin, err - tube.delta_z(k));
        rep.peak_delta_z = std::max(rep.peak_delta_z, tube.delta_z(k));
        rep.peak_error = std::max(rep.peak_error, err);
    }
    rep.pass = rep.max_margin <= 1e-6 * (1.0 + rep.peak_delta_z);
    return rep;
}

} // namespace rompc
