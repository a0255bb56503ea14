#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "rompc/error.hpp"
#include "rompc/lti.hpp"
#include "rompc/sdp.hpp"

namespace rompc::conic {

using sdp::Status;

/**
 * @brief min c^T x subject to G x + s = h, s in K.
 *
 * K is the product of the nonnegative orthant (the first n_linear rows) and
 * second-order cones {(s0, s1) : s0 >= ||s1||}, one per entry of soc_dims, in
 * row order after the linear rows.
 */
struct ConeProgram {
    VectorXd c;
    MatrixXd G;
    VectorXd h;
    int n_linear = 0;
    std::vector<int> soc_dims;

    void validate() const
    {
        detail::require(G.cols() == c.size() && G.rows() == h.size(), "ConeProgram: dimension mismatch");
        long rows = n_linear;
        for (int d : soc_dims) {
            detail::require(d >= 2, "ConeProgram: second-order cones need dimension >= 2");
            rows += d;
        }
        detail::require(rows == G.rows(), "ConeProgram: cone dimensions do not add up to the row count");
        detail::require(detail::all_finite(G) && detail::all_finite(c) && detail::all_finite(h),
                        "ConeProgram: non-finite data");
    }
};

struct Options {
    int max_iterations = 100;
    double tolerance = 1e-9;
    double step_fraction = 0.99;
    /// Residual level at which a stalled run still counts as optimal.
    double reduced_tolerance = 1e-7;
    bool verbose = false;
};

struct Result {
    Status status = Status::solver_limit;
    VectorXd x;
    VectorXd s;
    VectorXd z;
    double objective = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    double primal_infeasibility = 0.0;
    double dual_infeasibility = 0.0;
    double relative_gap = 0.0;
};

namespace detail {

using rompc::detail::require;

/// Per-cone Nesterov-Todd scaling: W z = W^-1 s = lambda.
struct Scaling {
    VectorXd d;                 ///< linear part: W = diag(d)
    std::vector<VectorXd> v;    ///< SOC: W = eta (2 v v^T - J) with v^T J v = 1
    std::vector<double> eta;
    VectorXd lambda;
};

class Engine {
public:
    explicit Engine(const ConeProgram& p, const Options& o) : p_(p), opt_(o)
    {
        offsets_.push_back(p.n_linear);
        for (int d : p.soc_dims) {
            offsets_.push_back(offsets_.back() + d);
        }
        degree_ = p.n_linear + static_cast<int>(p.soc_dims.size());
    }

    Result run()
    {
        initialize();
        const double hn = std::max(1.0, p_.h.norm());
        const double cn = std::max(1.0, p_.c.norm());
        Result best;
        double best_score = std::numeric_limits<double>::infinity();
        for (int it = 0; it <= opt_.max_iterations; ++it) {
            const VectorXd rx = p_.G.transpose() * z_ + p_.c;
            const VectorXd rz = p_.G * x_ + s_ - p_.h;
            const double pobj = p_.c.dot(x_);
            const double dobj = -p_.h.dot(z_);
            const double gap = s_.dot(z_);
            const double pinf = rz.norm() / hn;
            const double dinf = rx.norm() / cn;
            const double rgap = std::abs(pobj - dobj) / std::max(1.0, std::min(std::abs(pobj), std::abs(dobj)));
            if (opt_.verbose) {
                std::fprintf(stderr, "cone it %3d pobj % .10e dobj % .10e pinf %.2e dinf %.2e gap %.2e\n", it, pobj,
                             dobj, pinf, dinf, gap);
            }
            const double score = std::max({pinf, dinf, std::min(rgap, gap)});
            if (score < best_score) {
                best_score = score;
                best = snapshot(Status::solver_limit, it, pinf, dinf, rgap);
            }
            if (pinf <= opt_.tolerance && dinf <= opt_.tolerance &&
                (gap <= opt_.tolerance || rgap <= opt_.tolerance)) {
                return snapshot(Status::optimal, it, pinf, dinf, rgap);
            }
            // Primal infeasibility: z in K, G^T z ~ 0 and h^T z < 0.
            const double hz = p_.h.dot(z_);
            if (hz < 0.0 && (p_.G.transpose() * z_).norm() <= opt_.tolerance * -hz &&
                pinf > opt_.tolerance) {
                return snapshot(Status::infeasible, it, pinf, dinf, rgap);
            }
            if (it == opt_.max_iterations) {
                break;
            }
            const double mu = gap / degree_;
            if (!scale() || !factor()) {
                break;
            }

            // Predictor.
            VectorXd rhs_c = -lambda_product(sc_.lambda, sc_.lambda);
            VectorXd dxa, dsa, dza;
            if (!direction(rx, rz, rhs_c, dxa, dsa, dza)) {
                break;
            }
            const double aa = std::min(1.0, std::min(max_step(s_, dsa), max_step(z_, dza)));
            const double mu_aff = (s_ + aa * dsa).dot(z_ + aa * dza) / degree_;
            const double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 0.0, 1.0);

            // Corrector: lambda o (W dz + W^-1 ds) = -lambda o lambda + sigma mu e - (W^-1 ds_a) o (W dz_a).
            const VectorXd wdz = apply_w(dza);
            const VectorXd wids = apply_winv(dsa);
            rhs_c += sigma * mu * identity() - lambda_product(wids, wdz);
            VectorXd dx, ds, dz;
            if (!direction(rx, rz, rhs_c, dx, ds, dz)) {
                break;
            }
            const double a =
                std::min(1.0, opt_.step_fraction * std::min(max_step(s_, ds), max_step(z_, dz)));
            x_ += a * dx;
            s_ += a * ds;
            z_ += a * dz;
            if (!x_.allFinite() || !s_.allFinite() || !z_.allFinite()) {
                break;
            }
        }
        // Stalled near the optimum: accept at reduced accuracy.
        if (best.primal_infeasibility <= opt_.reduced_tolerance && best.dual_infeasibility <= opt_.reduced_tolerance &&
            best.relative_gap <= 10.0 * opt_.reduced_tolerance) {
            best.status = Status::optimal;
        }
        return best;
    }

private:
    const ConeProgram& p_;
    Options opt_;
    std::vector<long> offsets_;
    int degree_ = 0;
    VectorXd x_, s_, z_;
    Scaling sc_;
    MatrixXd Gt_;
    Eigen::LLT<MatrixXd> llt_;

    [[nodiscard]] int n_soc() const { return static_cast<int>(p_.soc_dims.size()); }
    [[nodiscard]] long soc_offset(int k) const { return offsets_[k]; }
    [[nodiscard]] int soc_dim(int k) const { return p_.soc_dims[k]; }

    VectorXd identity() const
    {
        VectorXd e = VectorXd::Zero(p_.h.size());
        e.head(p_.n_linear).setOnes();
        for (int k = 0; k < n_soc(); ++k) {
            e(soc_offset(k)) = 1.0;
        }
        return e;
    }

    /// Smallest t with v + t e in the closed cone, per cone; returns the max over cones.
    double cone_deficit(const VectorXd& v) const
    {
        double t = -std::numeric_limits<double>::infinity();
        for (long i = 0; i < p_.n_linear; ++i) {
            t = std::max(t, -v(i));
        }
        for (int k = 0; k < n_soc(); ++k) {
            const auto seg = v.segment(soc_offset(k), soc_dim(k));
            t = std::max(t, seg.tail(soc_dim(k) - 1).norm() - seg(0));
        }
        return t;
    }

    void initialize()
    {
        const auto m = p_.h.size();
        MatrixXd GtG = p_.G.transpose() * p_.G;
        Eigen::LLT<MatrixXd> llt(GtG);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("conic: G must have full column rank");
        }
        x_ = llt.solve(p_.G.transpose() * p_.h);
        s_ = p_.h - p_.G * x_;
        z_ = m > 0 ? VectorXd(-p_.G * llt.solve(p_.c)) : VectorXd(VectorXd::Zero(0));
        const VectorXd e = identity();
        const double as = cone_deficit(s_);
        if (as >= -1e-8) {
            s_ += (1.0 + std::max(as, 0.0)) * e;
        }
        const double az = cone_deficit(z_);
        if (az >= -1e-8) {
            z_ += (1.0 + std::max(az, 0.0)) * e;
        }
    }

    static double soc_det(const Eigen::Ref<const VectorXd>& u)
    {
        return (u(0) - u.tail(u.size() - 1).norm()) * (u(0) + u.tail(u.size() - 1).norm());
    }

    bool scale()
    {
        const long nl = p_.n_linear;
        sc_.d.resize(nl);
        sc_.lambda.resize(p_.h.size());
        for (long i = 0; i < nl; ++i) {
            if (!(s_(i) > 0.0 && z_(i) > 0.0)) {
                return false;
            }
            sc_.d(i) = std::sqrt(s_(i) / z_(i));
            sc_.lambda(i) = std::sqrt(s_(i) * z_(i));
        }
        sc_.v.assign(n_soc(), VectorXd());
        sc_.eta.assign(n_soc(), 0.0);
        for (int k = 0; k < n_soc(); ++k) {
            const long o = soc_offset(k);
            const int d = soc_dim(k);
            const VectorXd s = s_.segment(o, d);
            const VectorXd z = z_.segment(o, d);
            const double ds = soc_det(s);
            const double dz = soc_det(z);
            if (!(ds > 0.0 && dz > 0.0 && s(0) > 0.0 && z(0) > 0.0)) {
                return false;
            }
            const VectorXd sb = s / std::sqrt(ds);
            const VectorXd zb = z / std::sqrt(dz);
            const double g = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
            VectorXd w = sb;
            w(0) += zb(0);
            w.tail(d - 1) -= zb.tail(d - 1);
            w /= 2.0 * g;
            VectorXd v = w;
            v(0) += 1.0;
            sc_.v[k] = v / std::sqrt(2.0 * (w(0) + 1.0));
            sc_.eta[k] = std::pow(ds / dz, 0.25);
            sc_.lambda.segment(o, d) = soc_w(k, z);
        }
        return sc_.lambda.allFinite();
    }

    VectorXd soc_w(int k, const VectorXd& u) const
    {
        const VectorXd& v = sc_.v[k];
        VectorXd Ju = u;
        Ju.tail(u.size() - 1) *= -1.0;
        return sc_.eta[k] * (2.0 * v.dot(u) * v - Ju);
    }

    VectorXd soc_winv(int k, const VectorXd& u) const
    {
        VectorXd Jv = sc_.v[k];
        Jv.tail(Jv.size() - 1) *= -1.0;
        VectorXd Ju = u;
        Ju.tail(u.size() - 1) *= -1.0;
        return (2.0 * Jv.dot(u) * Jv - Ju) / sc_.eta[k];
    }

    VectorXd apply_w(const VectorXd& u) const
    {
        VectorXd out(u.size());
        out.head(p_.n_linear) = sc_.d.cwiseProduct(u.head(p_.n_linear));
        for (int k = 0; k < n_soc(); ++k) {
            out.segment(soc_offset(k), soc_dim(k)) = soc_w(k, u.segment(soc_offset(k), soc_dim(k)));
        }
        return out;
    }

    VectorXd apply_winv(const VectorXd& u) const
    {
        VectorXd out(u.size());
        out.head(p_.n_linear) = u.head(p_.n_linear).cwiseQuotient(sc_.d);
        for (int k = 0; k < n_soc(); ++k) {
            out.segment(soc_offset(k), soc_dim(k)) = soc_winv(k, u.segment(soc_offset(k), soc_dim(k)));
        }
        return out;
    }

    /// Jordan product u o v.
    VectorXd lambda_product(const VectorXd& u, const VectorXd& v) const
    {
        VectorXd out(u.size());
        out.head(p_.n_linear) = u.head(p_.n_linear).cwiseProduct(v.head(p_.n_linear));
        for (int k = 0; k < n_soc(); ++k) {
            const long o = soc_offset(k);
            const int d = soc_dim(k);
            out(o) = u.segment(o, d).dot(v.segment(o, d));
            out.segment(o + 1, d - 1) = u(o) * v.segment(o + 1, d - 1) + v(o) * u.segment(o + 1, d - 1);
        }
        return out;
    }

    /// Solves lambda o x = r.
    VectorXd lambda_divide(const VectorXd& r) const
    {
        const VectorXd& l = sc_.lambda;
        VectorXd out(r.size());
        out.head(p_.n_linear) = r.head(p_.n_linear).cwiseQuotient(l.head(p_.n_linear));
        for (int k = 0; k < n_soc(); ++k) {
            const long o = soc_offset(k);
            const int d = soc_dim(k);
            const double l0 = l(o);
            const auto l1 = l.segment(o + 1, d - 1);
            const double x0 = (l0 * r(o) - l1.dot(r.segment(o + 1, d - 1))) / soc_det(l.segment(o, d));
            out(o) = x0;
            out.segment(o + 1, d - 1) = (r.segment(o + 1, d - 1) - x0 * l1) / l0;
        }
        return out;
    }

    bool factor()
    {
        // Gt = W^-1 G, block by block.
        Gt_.resize(p_.G.rows(), p_.G.cols());
        const long nl = p_.n_linear;
        Gt_.topRows(nl) = sc_.d.cwiseInverse().asDiagonal() * p_.G.topRows(nl);
        for (int k = 0; k < n_soc(); ++k) {
            const long o = soc_offset(k);
            const int d = soc_dim(k);
            VectorXd Jv = sc_.v[k];
            Jv.tail(d - 1) *= -1.0;
            const auto Gk = p_.G.middleRows(o, d);
            MatrixXd JG = Gk;
            JG.bottomRows(d - 1) *= -1.0;
            Gt_.middleRows(o, d) = (2.0 * Jv * (Jv.transpose() * Gk) - JG) / sc_.eta[k];
        }
        MatrixXd H = MatrixXd::Zero(p_.G.cols(), p_.G.cols());
        H.selfadjointView<Eigen::Lower>().rankUpdate(Gt_.transpose());
        H.triangularView<Eigen::StrictlyUpper>() = H.transpose();
        llt_.compute(H);
        if (llt_.info() != Eigen::Success) {
            const double shift = 1e-12 * std::max(1.0, H.diagonal().maxCoeff());
            H.diagonal().array() += shift;
            llt_.compute(H);
        }
        return llt_.info() == Eigen::Success;
    }

    /**
     * G dx + ds = -rz, G^T dz = -rx, lambda o (W dz + W^-1 ds) = rc.
     * With rho = lambda \ rc: ds = W (rho - W dz) and
     * (W^-1 G)^T (W^-1 G) dx = -rx - (W^-1 G)^T (rho + W^-1 rz).
     */
    bool direction(const VectorXd& rx, const VectorXd& rz, const VectorXd& rc, VectorXd& dx, VectorXd& ds,
                   VectorXd& dz) const
    {
        const VectorXd rho = lambda_divide(rc);
        const VectorXd q = rho + apply_winv(rz);
        dx = llt_.solve(-rx - Gt_.transpose() * q);
        // W dz = W^-1 (G dx + rz) + rho
        const VectorXd wdz = Gt_ * dx + q;
        dz = apply_winv(wdz);
        ds = apply_w(rho - wdz);
        return dx.allFinite() && dz.allFinite() && ds.allFinite();
    }

    /// Largest t with u + t du in the cone.
    double max_step(const VectorXd& u, const VectorXd& du) const
    {
        double t = std::numeric_limits<double>::infinity();
        for (long i = 0; i < p_.n_linear; ++i) {
            if (du(i) < 0.0) {
                t = std::min(t, -u(i) / du(i));
            }
        }
        for (int k = 0; k < n_soc(); ++k) {
            const long o = soc_offset(k);
            const int d = soc_dim(k);
            const double u0 = u(o);
            const double d0 = du(o);
            const auto u1 = u.segment(o + 1, d - 1);
            const auto d1 = du.segment(o + 1, d - 1);
            // f(t) = (u0 + t d0)^2 - ||u1 + t d1||^2 = a t^2 + b t + c, with u0 + t d0 >= 0.
            const double a = d0 * d0 - d1.squaredNorm();
            const double b = 2.0 * (u0 * d0 - u1.dot(d1));
            const double c = u0 * u0 - u1.squaredNorm();
            double tk = std::numeric_limits<double>::infinity();
            if (d0 < 0.0) {
                tk = -u0 / d0;
            }
            const auto consider = [&](double r) {
                if (r > 0.0 && std::isfinite(r)) {
                    tk = std::min(tk, r);
                }
            };
            if (std::abs(a) < 1e-300) {
                if (b < 0.0) {
                    consider(-c / b);
                }
            } else {
                const double disc = b * b - 4.0 * a * c;
                if (disc >= 0.0) {
                    const double sq = std::sqrt(disc);
                    const double qq = -0.5 * (b + (b >= 0.0 ? sq : -sq));
                    if (qq != 0.0) {
                        consider(qq / a);
                        consider(c / qq);
                    }
                }
            }
            t = std::min(t, tk);
        }
        return t;
    }

    Result snapshot(Status st, int it, double pinf, double dinf, double gap) const
    {
        Result r;
        r.status = st;
        r.x = x_;
        r.s = s_;
        r.z = z_;
        r.objective = p_.c.dot(x_);
        r.iterations = it;
        r.primal_infeasibility = pinf;
        r.dual_infeasibility = dinf;
        r.relative_gap = gap;
        return r;
    }
};

} // namespace detail

inline Result solve(const ConeProgram& program, const Options& options = {})
{
    program.validate();
    detail::Engine engine(program, options);
    return engine.run();
}

} // namespace rompc::conic
