#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "rompc/error.hpp"
#include "rompc/lti.hpp"

namespace rompc {

/// Petrov-Galerkin reduced model x ~ V x_r with W^T V = I.
struct ReducedModel {
    MatrixXd V;
    MatrixXd W;
    MatrixXd Ar;
    MatrixXd Br;
    MatrixXd Cr;
    VectorXd xr0;

    [[nodiscard]] int order() const { return static_cast<int>(V.cols()); }

    /// Reduced model as a stand-alone LTI system (no disturbance channel).
    [[nodiscard]] LtiSystem as_system() const
    {
        return LtiSystem(Ar, Br, MatrixXd::Zero(Ar.rows(), 0), Cr, xr0);
    }
};

/**
 * @brief Error dynamics e = x - V x_r driven by r = [w; x_r; u]:
 *
 *   de/dt = A e + Be r,   z_e = C e,   e(0) = e0
 */
struct ErrorDynamics {
    MatrixXd A;
    MatrixXd Be;
    MatrixXd C;
    VectorXd e0;
    int n_w = 0;
    int n_r = 0;
    int n_u = 0;

    [[nodiscard]] int states() const { return static_cast<int>(A.rows()); }
    [[nodiscard]] int drive_size() const { return n_w + n_r + n_u; }
};

namespace detail {

struct ModeColumn {
    double re;
    double im;
    Eigen::VectorXcd vec;
};

} // namespace detail

/**
 * @brief Orthonormal lumped-plus-modal basis for a chain in [position; velocity] coordinates.
 *
 * The first two directions are the uniform position and uniform velocity
 * patterns; the rest are real and imaginary parts of the eigenvectors of the
 * slowest modes (largest real part, then smaller |imag|). Returns V with W = V.
 */
inline std::pair<MatrixXd, MatrixXd> modal_lumped_projection(const LtiSystem& sys, int n_modes)
{
    sys.validate();
    const int n = sys.states();
    detail::require(n % 2 == 0, "modal_lumped_projection: expects [position; velocity] coordinates (even state count)");
    detail::require(n_modes >= 0 && n_modes % 2 == 0, "modal_lumped_projection: n_modes must be even and non-negative");
    detail::require(2 + n_modes <= n, "modal_lumped_projection: 2 + n_modes exceeds the state dimension");
    if (!is_hurwitz(sys.A)) {
        throw InvalidArgument("modal_lumped_projection: A is not Hurwitz");
    }

    const int half = n / 2;
    MatrixXd basis = MatrixXd::Zero(n, 2 + n_modes);
    basis.block(0, 0, half, 1).setConstant(1.0 / std::sqrt(static_cast<double>(half)));
    basis.block(half, 1, half, 1).setConstant(1.0 / std::sqrt(static_cast<double>(half)));

    Eigen::EigenSolver<MatrixXd> es(sys.A, true);
    if (es.info() != Eigen::Success) {
        throw NumericalError("modal_lumped_projection: eigen-decomposition failed");
    }
    std::vector<detail::ModeColumn> modes;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const auto ev = es.eigenvalues()(i);
        if (ev.imag() < 0.0) {
            continue; // conjugate partner of a listed mode
        }
        modes.push_back({ev.real(), ev.imag(), es.eigenvectors().col(i)});
    }
    std::stable_sort(modes.begin(), modes.end(), [](const auto& a, const auto& b) {
        if (a.re != b.re) {
            return a.re > b.re;
        }
        return std::abs(a.im) < std::abs(b.im);
    });

    int col = 2;
    for (const auto& mode : modes) {
        if (col >= 2 + n_modes) {
            break;
        }
        if (mode.im == 0.0) {
            basis.col(col++) = mode.vec.real();
        } else {
            if (col + 2 > 2 + n_modes) {
                throw InvalidArgument("modal_lumped_projection: n_modes splits a complex pair; choose a different n_modes");
            }
            basis.col(col++) = mode.vec.real();
            basis.col(col++) = mode.vec.imag();
        }
    }
    detail::require(col == 2 + n_modes, "modal_lumped_projection: not enough modes available");

    Eigen::ColPivHouseholderQR<MatrixXd> qr(basis);
    qr.setThreshold(1e-10);
    if (qr.rank() < basis.cols()) {
        throw InvalidArgument("modal_lumped_projection: basis is rank deficient; choose a different n_modes");
    }
    // Plain Householder QR keeps the column order (and hence the lumped directions first).
    Eigen::HouseholderQR<MatrixXd> hqr(basis);
    MatrixXd V = hqr.householderQ() * MatrixXd::Identity(n, basis.cols());
    return {V, V};
}

/// Petrov-Galerkin reduction with A_r = W^T A V, B_r = W^T B, C_r = C V, x_r0 = W^T x0.
inline ReducedModel petrov_galerkin_reduce(const LtiSystem& sys, const MatrixXd& V, const MatrixXd& W)
{
    sys.validate();
    detail::require(V.rows() == sys.states() && W.rows() == sys.states() && V.cols() == W.cols(),
                    "petrov_galerkin_reduce: V and W must be n_f x n_r");
    detail::require_finite(V, "petrov_galerkin_reduce: V");
    detail::require_finite(W, "petrov_galerkin_reduce: W");
    const MatrixXd gram = W.transpose() * V;
    const double residual = (gram - MatrixXd::Identity(V.cols(), V.cols())).norm();
    if (residual > 1e-8) {
        throw InvalidArgument("petrov_galerkin_reduce: W^T V deviates from identity by " + std::to_string(residual));
    }
    ReducedModel rom;
    rom.V = V;
    rom.W = W;
    rom.Ar = W.transpose() * sys.A * V;
    rom.Br = W.transpose() * sys.B;
    rom.Cr = sys.C * V;
    rom.xr0 = W.transpose() * sys.x0;
    return rom;
}

/// Residual projector I - V W^T.
inline MatrixXd residual_projector(const ReducedModel& rom)
{
    return MatrixXd::Identity(rom.V.rows(), rom.V.rows()) - rom.V * rom.W.transpose();
}

inline ErrorDynamics error_dynamics(const LtiSystem& sys, const ReducedModel& rom)
{
    sys.validate();
    detail::require(rom.V.rows() == sys.states(), "error_dynamics: ROM does not match the plant");
    detail::require(rom.Br.cols() == sys.inputs(), "error_dynamics: ROM input count does not match the plant");
    const MatrixXd Pi = residual_projector(rom);
    ErrorDynamics err;
    err.n_w = sys.disturbances();
    err.n_r = rom.order();
    err.n_u = sys.inputs();
    err.A = sys.A;
    err.C = sys.C;
    err.Be.resize(sys.states(), err.drive_size());
    err.Be << sys.E, Pi * sys.A * rom.V, Pi * sys.B;
    err.e0 = Pi * sys.x0;
    return err;
}

/// Joint trajectory of the reduced model and the error dynamics.
struct Reconstruction {
    VectorXd times;
    MatrixXd xr;
    MatrixXd e;
    MatrixXd zr;
    MatrixXd ze;
    MatrixXd z; ///< z_r + z_e
};

/// Cascade [x_r; e] driven by [u; w] as one LTI system.
inline LtiSystem rom_error_cascade(const LtiSystem& sys, const ReducedModel& rom, const ErrorDynamics& err)
{
    const int nr = rom.order();
    const int n = err.states();
    const int nu = err.n_u;
    const int nw = err.n_w;
    MatrixXd A = MatrixXd::Zero(nr + n, nr + n);
    A.topLeftCorner(nr, nr) = rom.Ar;
    A.bottomLeftCorner(n, nr) = err.Be.middleCols(nw, nr);
    A.bottomRightCorner(n, n) = err.A;
    MatrixXd B = MatrixXd::Zero(nr + n, nu);
    B.topRows(nr) = rom.Br;
    B.bottomRows(n) = err.Be.rightCols(nu);
    MatrixXd E = MatrixXd::Zero(nr + n, nw);
    E.bottomRows(n) = err.Be.leftCols(nw);
    MatrixXd C(sys.outputs(), nr + n);
    C << rom.Cr, err.C;
    VectorXd x0(nr + n);
    x0 << rom.xr0, err.e0;
    return LtiSystem(A, B, E, C, x0);
}

/// Simulates x_r and e jointly and returns z_r + z_e next to both parts.
inline Reconstruction reconstruct_full_output(const LtiSystem& sys, const ReducedModel& rom, const ErrorDynamics& err,
                                              const SampledSignal& u, const SampledSignal& w, double dt, double t_final)
{
    detail::require(err.n_r == rom.order() && err.n_u == sys.inputs() && err.n_w == sys.disturbances(),
                    "reconstruct_full_output: inconsistent dimensions");
    const auto cascade = rom_error_cascade(sys, rom, err);
    const auto traj = simulate(cascade, u, w, dt, t_final);
    const int nr = rom.order();
    Reconstruction out;
    out.times = traj.times;
    out.xr = traj.states.topRows(nr);
    out.e = traj.states.bottomRows(err.states());
    out.zr = rom.Cr * out.xr;
    out.ze = err.C * out.e;
    out.z = out.zr + out.ze;
    return out;
}

} // namespace rompc
