#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "rompc/error.hpp"

namespace rompc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

inline bool all_finite(const MatrixXd& m)
{
    return m.array().isFinite().all();
}

inline void require_finite(const MatrixXd& m, const char* what)
{
    if (!all_finite(m)) {
        throw InvalidArgument(std::string(what) + " contains non-finite entries");
    }
}

inline MatrixXd symmetrize(const MatrixXd& m)
{
    return 0.5 * (m + m.transpose());
}

} // namespace detail

/**
 * @brief Continuous-time LTI plant
 *
 *   dx/dt = A x + B u + E w,   x(0) = x0
 *   z     = C x
 *
 * E may have zero columns (no disturbance channel).
 */
struct LtiSystem {
    MatrixXd A;
    MatrixXd B;
    MatrixXd E;
    MatrixXd C;
    VectorXd x0;

    LtiSystem() = default;

    LtiSystem(MatrixXd a, MatrixXd b, MatrixXd e, MatrixXd c, VectorXd initial)
        : A(std::move(a)), B(std::move(b)), E(std::move(e)), C(std::move(c)), x0(std::move(initial))
    {
        validate();
    }

    /// System without disturbance input and with zero initial state.
    static LtiSystem from_abc(MatrixXd a, MatrixXd b, MatrixXd c)
    {
        const auto n = a.rows();
        return LtiSystem(std::move(a), std::move(b), MatrixXd::Zero(n, 0), std::move(c), VectorXd::Zero(n));
    }

    [[nodiscard]] int states() const { return static_cast<int>(A.rows()); }
    [[nodiscard]] int inputs() const { return static_cast<int>(B.cols()); }
    [[nodiscard]] int disturbances() const { return static_cast<int>(E.cols()); }
    [[nodiscard]] int outputs() const { return static_cast<int>(C.rows()); }

    void validate() const
    {
        const auto n = A.rows();
        detail::require(A.cols() == n, "LtiSystem: A must be square");
        detail::require(B.rows() == n, "LtiSystem: B row count must match A");
        detail::require(E.rows() == n, "LtiSystem: E row count must match A");
        detail::require(C.cols() == n, "LtiSystem: C column count must match A");
        detail::require(x0.size() == n, "LtiSystem: x0 size must match A");
        detail::require_finite(A, "LtiSystem::A");
        detail::require_finite(B, "LtiSystem::B");
        detail::require_finite(E, "LtiSystem::E");
        detail::require_finite(C, "LtiSystem::C");
        detail::require_finite(x0, "LtiSystem::x0");
    }
};

/// Affine output constraint a^T z + b <= 0. Its Lipschitz constant is ||a||.
struct AffineConstraint {
    VectorXd a;
    double b = 0.0;

    [[nodiscard]] double lipschitz() const { return a.norm(); }
    [[nodiscard]] double operator()(const VectorXd& z) const { return a.dot(z) + b; }
};

/**
 * @brief Zero-order-hold signal.
 *
 * Column k of `values` holds on [times(k), times(k+1)); the last column holds
 * indefinitely.
 */
struct SampledSignal {
    VectorXd times;
    MatrixXd values;

    SampledSignal() = default;

    SampledSignal(VectorXd t, MatrixXd v) : times(std::move(t)), values(std::move(v)) { validate(); }

    /// Signal with `channels` rows that is zero everywhere.
    static SampledSignal zeros(int channels, double t0 = 0.0)
    {
        return SampledSignal(VectorXd::Constant(1, t0), MatrixXd::Zero(channels, 1));
    }

    static SampledSignal constant(const VectorXd& value, double t0 = 0.0)
    {
        return SampledSignal(VectorXd::Constant(1, t0), value);
    }

    /// Uniform grid t_k = k*dt, k = 0..cols-1.
    static SampledSignal uniform(double dt, MatrixXd v)
    {
        VectorXd t(v.cols());
        for (Eigen::Index k = 0; k < v.cols(); ++k) {
            t(k) = static_cast<double>(k) * dt;
        }
        return SampledSignal(std::move(t), std::move(v));
    }

    [[nodiscard]] int channels() const { return static_cast<int>(values.rows()); }
    [[nodiscard]] int samples() const { return static_cast<int>(times.size()); }

    /// Zero-order-hold evaluation; times before the first sample take the first value.
    [[nodiscard]] VectorXd at(double t) const
    {
        const auto* begin = times.data();
        const auto* end = begin + times.size();
        const auto* it = std::upper_bound(begin, end, t + 1e-12 * std::max(1.0, std::abs(t)));
        const auto idx = (it == begin) ? 0 : static_cast<Eigen::Index>(it - begin - 1);
        return values.col(idx);
    }

    void validate() const
    {
        detail::require(times.size() >= 1, "SampledSignal: grid must contain at least one time");
        detail::require(values.cols() == times.size(), "SampledSignal: one value column per time required");
        for (Eigen::Index k = 1; k < times.size(); ++k) {
            detail::require(times(k) > times(k - 1), "SampledSignal: times must be strictly increasing");
        }
        detail::require_finite(times, "SampledSignal::times");
        detail::require_finite(values, "SampledSignal::values");
    }
};

struct Discretization {
    MatrixXd Ad;
    MatrixXd Bd;
};

/**
 * @brief Exact zero-order-hold discretization.
 *
 * Ad = exp(A dt), Bd = int_0^dt exp(A s) ds B, both read off the exponential
 * of the augmented matrix [[A, B], [0, 0]] * dt (scaling and squaring with
 * Pade approximants).
 */
inline Discretization zoh_discretize(const MatrixXd& A, const MatrixXd& B, double dt)
{
    detail::require(dt > 0.0 && std::isfinite(dt), "zoh_discretize: dt must be positive");
    detail::require(A.rows() == A.cols(), "zoh_discretize: A must be square");
    detail::require(B.rows() == A.rows(), "zoh_discretize: B must have as many rows as A");
    detail::require_finite(A, "zoh_discretize: A");
    detail::require_finite(B, "zoh_discretize: B");

    const auto n = A.rows();
    const auto m = B.cols();
    MatrixXd M = MatrixXd::Zero(n + m, n + m);
    M.topLeftCorner(n, n) = A * dt;
    M.topRightCorner(n, m) = B * dt;
    const MatrixXd phi = M.exp();
    if (!detail::all_finite(phi)) {
        throw NumericalError("zoh_discretize: matrix exponential did not converge; rescale the time unit");
    }
    return {phi.topLeftCorner(n, n), phi.topRightCorner(n, m)};
}

/// Largest real part over the eigenvalues of A (real Schur based, defective A is fine).
inline double spectral_abscissa(const MatrixXd& A)
{
    detail::require(A.rows() == A.cols(), "spectral_abscissa: A must be square");
    detail::require_finite(A, "spectral_abscissa: A");
    if (A.rows() == 0) {
        return -std::numeric_limits<double>::infinity();
    }
    Eigen::EigenSolver<MatrixXd> es(A, false);
    if (es.info() != Eigen::Success) {
        throw NumericalError("spectral_abscissa: eigenvalue iteration failed");
    }
    return es.eigenvalues().real().maxCoeff();
}

inline bool is_hurwitz(const MatrixXd& A)
{
    return A.rows() == 0 || spectral_abscissa(A) < 0.0;
}

/**
 * @brief Solves A^T X + X A + Q = 0 for Hurwitz A (Bartels-Stewart on the complex Schur form).
 */
inline MatrixXd solve_lyapunov(const MatrixXd& A, const MatrixXd& Q)
{
    detail::require(A.rows() == A.cols() && Q.rows() == A.rows() && Q.cols() == A.cols(),
                    "solve_lyapunov: dimension mismatch");
    const auto n = A.rows();
    if (n == 0) {
        return MatrixXd(0, 0);
    }
    using CMat = Eigen::MatrixXcd;
    Eigen::ComplexSchur<MatrixXd> schur(A);
    if (schur.info() != Eigen::Success) {
        throw NumericalError("solve_lyapunov: Schur decomposition failed");
    }
    const CMat& U = schur.matrixU();
    const CMat& T = schur.matrixT();
    const CMat Qt = U.adjoint() * Q.cast<std::complex<double>>() * U;
    const CMat Th = T.adjoint();
    CMat Y = CMat::Zero(n, n);
    // T^H Y + Y T = -Qt, column by column.
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::VectorXcd rhs = -Qt.col(j);
        for (Eigen::Index k = 0; k < j; ++k) {
            rhs -= Y.col(k) * T(k, j);
        }
        CMat L = Th;
        L.diagonal().array() += T(j, j);
        Y.col(j) = L.triangularView<Eigen::Lower>().solve(rhs);
    }
    const MatrixXd X = (U * Y * U.adjoint()).real();
    if (!detail::all_finite(X)) {
        throw NumericalError("solve_lyapunov: singular Lyapunov operator");
    }
    return detail::symmetrize(X);
}

/// Controllability-type Gramian: A X + X A^T + B B^T = 0.
inline MatrixXd controllability_gramian(const MatrixXd& A, const MatrixXd& B)
{
    return solve_lyapunov(A.transpose(), B * B.transpose());
}

struct Trajectory {
    VectorXd times;
    MatrixXd states;  ///< one column per time
    MatrixXd outputs; ///< one column per time
};

namespace detail {

inline void require_on_grid(const VectorXd& times, double dt, const char* what)
{
    for (Eigen::Index k = 0; k < times.size(); ++k) {
        const double q = times(k) / dt;
        if (times(k) < -1e-12 || std::abs(q - std::round(q)) > 1e-9 * std::max(1.0, std::abs(q))) {
            throw InvalidArgument(std::string(what) + ": input grid is not aligned with the output step");
        }
    }
}

} // namespace detail

/**
 * @brief Exact ZOH simulation of an LTI system on the uniform grid k*dt, k = 0..K.
 *
 * The grids of u and w must be multiples of dt; between grid points both inputs
 * are held constant.
 */
inline Trajectory simulate(const LtiSystem& sys, const SampledSignal& u, const SampledSignal& w,
                           double dt, double t_final)
{
    sys.validate();
    detail::require(dt > 0.0, "simulate: dt must be positive");
    detail::require(t_final >= 0.0, "simulate: t_final must be non-negative");
    detail::require(u.channels() == sys.inputs(), "simulate: u has wrong channel count");
    detail::require(w.channels() == sys.disturbances(), "simulate: w has wrong channel count");
    u.validate();
    w.validate();
    detail::require_on_grid(u.times, dt, "simulate(u)");
    detail::require_on_grid(w.times, dt, "simulate(w)");
    const double steps_real = t_final / dt;
    const auto steps = static_cast<Eigen::Index>(std::llround(steps_real));
    detail::require(std::abs(steps_real - static_cast<double>(steps)) < 1e-9 * std::max(1.0, steps_real),
                    "simulate: t_final must be a multiple of dt");

    const auto n = sys.states();
    MatrixXd Bu(n, sys.inputs() + sys.disturbances());
    Bu << sys.B, sys.E;
    const auto d = zoh_discretize(sys.A, Bu, dt);

    Trajectory out;
    out.times.resize(steps + 1);
    out.states.resize(n, steps + 1);
    out.outputs.resize(sys.outputs(), steps + 1);
    VectorXd x = sys.x0;
    VectorXd in(sys.inputs() + sys.disturbances());
    for (Eigen::Index k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        out.times(k) = t;
        out.states.col(k) = x;
        out.outputs.col(k) = sys.C * x;
        if (k == steps) {
            break;
        }
        in << u.at(t), w.at(t);
        x = d.Ad * x + d.Bd * in;
    }
    if (!detail::all_finite(out.states)) {
        throw NumericalError("simulate: state trajectory diverged");
    }
    return out;
}

inline Trajectory simulate(const LtiSystem& sys, const SampledSignal& u, double dt, double t_final)
{
    return simulate(sys, u, SampledSignal::zeros(sys.disturbances()), dt, t_final);
}

} // namespace rompc
