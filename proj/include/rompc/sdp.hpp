#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rompc/error.hpp"

/**
 * @file sdp.hpp
 * @brief Primal-dual interior-point solver for LMI problems in one symmetric
 *        matrix variable P and a few scalar variables y:
 *
 *   minimize    c^T y
 *   subject to  F0_b + sum_h L_h^T P R_h + sum_s y_s G_s  >= 0   for every block b
 *
 * Each block is given in congruence form, which lets the Schur complement be
 * assembled in O(m^4) instead of O(m^6). The method is the HKM direction with
 * Mehrotra predictor-corrector and an infeasible start.
 */

namespace rompc::sdp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Contributes L^T P R to a block; the sum over all terms of a block must be symmetric.
struct HalfTerm {
    MatrixXd L;
    MatrixXd R;
};

/// Contributes y[index] * G to a block.
struct ScalarTerm {
    int index = 0;
    MatrixXd G;
};

struct LmiBlock {
    std::string name;
    MatrixXd F0;
    std::vector<HalfTerm> p_terms;
    std::vector<ScalarTerm> scalar_terms;

    [[nodiscard]] int size() const { return static_cast<int>(F0.rows()); }

    /// Affine value F0 + sum L^T P R + sum y_s G_s, symmetrized.
    [[nodiscard]] MatrixXd evaluate(const MatrixXd& P, const VectorXd& y) const
    {
        MatrixXd F = F0;
        for (const auto& t : p_terms) {
            F.noalias() += t.L.transpose() * P * t.R;
        }
        for (const auto& s : scalar_terms) {
            F += y(s.index) * s.G;
        }
        return 0.5 * (F + F.transpose());
    }
};

struct LmiProblem {
    int p_dim = 0;
    int n_scalars = 0;
    VectorXd cost; ///< objective weights on the scalar variables
    std::vector<LmiBlock> blocks;

    [[nodiscard]] int svec_size() const { return p_dim * (p_dim + 1) / 2; }
    [[nodiscard]] int variables() const { return svec_size() + n_scalars; }

    void validate() const
    {
        detail::require(p_dim >= 0 && n_scalars >= 0, "LmiProblem: negative dimension");
        detail::require(cost.size() == n_scalars, "LmiProblem: cost must have one entry per scalar");
        detail::require(!blocks.empty(), "LmiProblem: at least one block required");
        for (const auto& b : blocks) {
            const auto n = b.F0.rows();
            detail::require(b.F0.cols() == n && n > 0, "LmiProblem: block " + b.name + " must be square");
            for (const auto& t : b.p_terms) {
                detail::require(t.L.rows() == p_dim && t.R.rows() == p_dim && t.L.cols() == n && t.R.cols() == n,
                                "LmiProblem: half-term of block " + b.name + " has wrong shape");
            }
            for (const auto& s : b.scalar_terms) {
                detail::require(s.index >= 0 && s.index < n_scalars, "LmiProblem: scalar index out of range");
                detail::require(s.G.rows() == n && s.G.cols() == n, "LmiProblem: scalar coefficient has wrong shape");
            }
        }
    }
};

enum class Status { optimal, infeasible, solver_limit };

inline const char* to_string(Status s)
{
    switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::solver_limit: return "solver-limit";
    }
    return "unknown";
}

struct Options {
    int max_iterations = 120;
    double tolerance = 1e-9;
    double step_fraction = 0.95;
    /// Objective values above this are treated as divergence to an infeasible problem.
    double divergence_bound = 1e12;
    /// Iterations without halving the best residual before giving up.
    int stall_iterations = 10;
    /// Relative objective change below which a dual-feasible iterate counts as settled.
    double objective_stall = 1e-7;
    bool verbose = false;
};

struct Result {
    Status status = Status::solver_limit;
    MatrixXd P;
    VectorXd y;
    double objective = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    double primal_infeasibility = 0.0;
    double dual_infeasibility = 0.0;
    double relative_gap = 0.0;
};

namespace detail {

using BlockMats = std::vector<MatrixXd>;

struct SvecIndex {
    std::vector<int> row;
    std::vector<int> col;
    explicit SvecIndex(int m)
    {
        for (int i = 0; i < m; ++i) {
            for (int j = i; j < m; ++j) {
                row.push_back(i);
                col.push_back(j);
            }
        }
    }
};

inline MatrixXd unpack_p(const VectorXd& v, int m)
{
    MatrixXd P(m, m);
    int p = 0;
    for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
            P(i, j) = v(p);
            P(j, i) = v(p);
            ++p;
        }
    }
    return P;
}

class Engine {
public:
    Engine(const LmiProblem& prob, const Options& opt) : prob_(prob), opt_(opt), idx_(prob.p_dim)
    {
        nvar_ = prob.variables();
        nsvec_ = prob.svec_size();
        total_dim_ = 0;
        for (const auto& b : prob.blocks) {
            total_dim_ += b.size();
        }
        c_ = VectorXd::Zero(nvar_);
        c_.tail(prob.n_scalars) = prob.cost;
    }

    Result run()
    {
        initialize();
        Result res;
        double best_score = std::numeric_limits<double>::infinity();
        Result best;
        int last_progress = 0;
        int settled = 0;
        double prev_obj = std::numeric_limits<double>::quiet_NaN();
        for (int it = 0; it < opt_.max_iterations; ++it) {
            compute_inverses();
            const BlockMats Rd = dual_residual();
            const VectorXd rp = c_ - apply_a(X_);

            const double obj = c_.dot(y_);
            const double f0x = trace_inner(F0s(), X_);
            const double pinf = rp.norm() / (1.0 + c_.norm());
            const double dinf = block_norm(Rd) / (1.0 + f0_norm_);
            const double gap = std::abs(obj + f0x) / (1.0 + std::abs(obj) + std::abs(f0x));
            res.iterations = it;
            const double score = std::max({pinf, dinf, gap});
            if (opt_.verbose) {
                double trx = 0.0;
                for (const auto& x : X_) {
                    trx += x.trace();
                }
                std::fprintf(stderr, "sdp it %3d obj % .10e pinf %.2e dinf %.2e gap %.2e ray %.2e f0x %.2e\n", it, obj,
                             pinf, dinf, gap, apply_a(X_).norm() / trx, f0x / trx);
            }
            if (score < best_score && dinf < 1e-6) {
                if (score < 0.5 * best_score) {
                    last_progress = it;
                }
                best_score = score;
                best = snapshot(Status::solver_limit, it, pinf, dinf, gap);
            }
            if (it - last_progress > opt_.stall_iterations && best_score < 1e-3) {
                break;
            }
            if (pinf < opt_.tolerance && dinf < opt_.tolerance && gap < opt_.tolerance) {
                return snapshot(Status::optimal, it, pinf, dinf, gap);
            }
            if (primal_ray_found(f0x)) {
                auto r = snapshot(Status::infeasible, it, pinf, dinf, gap);
                return r;
            }
            if (std::abs(obj) > opt_.divergence_bound) {
                return snapshot(Status::infeasible, it, pinf, dinf, gap);
            }
            // A dual-feasible iterate whose objective has settled is as good as it gets.
            if (dinf < 1e-9 && std::abs(obj - prev_obj) <= opt_.objective_stall * (1.0 + std::abs(obj))) {
                if (++settled >= 2) {
                    best = snapshot(Status::solver_limit, it, pinf, dinf, gap);
                    best_score = std::min(best_score, 1.0);
                    break;
                }
            } else {
                settled = 0;
            }
            prev_obj = obj;

            const double mu = trace_inner(X_, Z_) / static_cast<double>(total_dim_);
            if (!factor_schur()) {
                break;
            }

            // Predictor.
            BlockMats T(X_.size());
            for (size_t b = 0; b < X_.size(); ++b) {
                T[b] = -X_[b];
            }
            BlockMats dXa, dZa;
            VectorXd dya;
            direction(T, Rd, rp, dXa, dya, dZa);
            const double ap_a = std::min(1.0, max_step(X_, dXa));
            const double ad_a = std::min(1.0, max_step(Z_, dZa));
            double mu_aff = 0.0;
            for (size_t b = 0; b < X_.size(); ++b) {
                mu_aff += ((X_[b] + ap_a * dXa[b]).cwiseProduct(Z_[b] + ad_a * dZa[b])).sum();
            }
            mu_aff /= static_cast<double>(total_dim_);
            const double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 0.0, 1.0);

            // Corrector.
            for (size_t b = 0; b < X_.size(); ++b) {
                T[b] = sigma * mu * Zi_[b] - X_[b] - dXa[b] * dZa[b] * Zi_[b];
            }
            BlockMats dX, dZ;
            VectorXd dy;
            direction(T, Rd, rp, dX, dy, dZ);
            const double ap = std::min(1.0, opt_.step_fraction * max_step(X_, dX));
            const double ad = std::min(1.0, opt_.step_fraction * max_step(Z_, dZ));
            for (size_t b = 0; b < X_.size(); ++b) {
                X_[b] += ap * dX[b];
                Z_[b] += ad * dZ[b];
            }
            y_ += ad * dy;
            if (!y_.allFinite()) {
                break;
            }
        }
        if (best_score < std::numeric_limits<double>::infinity()) {
            return best;
        }
        compute_inverses();
        return snapshot(Status::solver_limit, opt_.max_iterations, 1.0, 1.0, 1.0);
    }

private:
    const LmiProblem& prob_;
    Options opt_;
    SvecIndex idx_;
    int nvar_ = 0;
    int nsvec_ = 0;
    int total_dim_ = 0;
    double f0_norm_ = 0.0;
    VectorXd c_;
    VectorXd y_;
    BlockMats X_, Z_, Zi_;
    MatrixXd O_; ///< Schur matrix (upper triangle), then its Cholesky factor

    BlockMats F0s() const
    {
        BlockMats out;
        for (const auto& b : prob_.blocks) {
            out.push_back(b.F0);
        }
        return out;
    }

    static double trace_inner(const BlockMats& a, const BlockMats& b)
    {
        double s = 0.0;
        for (size_t k = 0; k < a.size(); ++k) {
            s += a[k].cwiseProduct(b[k]).sum();
        }
        return s;
    }

    static double block_norm(const BlockMats& a)
    {
        double s = 0.0;
        for (const auto& m : a) {
            s += m.squaredNorm();
        }
        return std::sqrt(s);
    }

    void initialize()
    {
        // Starting point scaled from the data, in the style of CSDP.
        double max_f = 0.0;
        double ratio = 0.0;
        f0_norm_ = block_norm(F0s());
        VectorXd fnorm = VectorXd::Zero(nvar_);
        for (const auto& b : prob_.blocks) {
            for (const auto& s : b.scalar_terms) {
                fnorm(nsvec_ + s.index) += s.G.squaredNorm();
            }
        }
        for (const auto& b : prob_.blocks) {
            MatrixXd probe = MatrixXd::Zero(b.size(), b.size());
            for (const auto& t : b.p_terms) {
                probe += t.L.transpose() * t.R;
            }
            const double pn = probe.norm();
            for (int p = 0; p < nsvec_; ++p) {
                // Cheap proxy for ||F_p||: average entry size of the P-part.
                fnorm(p) += pn * pn / std::max(1, nsvec_);
            }
        }
        fnorm = fnorm.cwiseSqrt();
        for (int i = 0; i < nvar_; ++i) {
            max_f = std::max(max_f, fnorm(i));
            ratio = std::max(ratio, (1.0 + std::abs(c_(i))) / (1.0 + fnorm(i)));
        }
        const double n = static_cast<double>(total_dim_);
        const double alpha = n * ratio;
        const double beta = (1.0 + std::max(max_f, f0_norm_)) / std::sqrt(n);
        y_ = VectorXd::Zero(nvar_);
        X_.clear();
        Z_.clear();
        for (const auto& b : prob_.blocks) {
            X_.push_back(10.0 * alpha * MatrixXd::Identity(b.size(), b.size()));
            Z_.push_back(10.0 * beta * MatrixXd::Identity(b.size(), b.size()));
        }
    }

    void compute_inverses()
    {
        Zi_.resize(Z_.size());
        for (size_t b = 0; b < Z_.size(); ++b) {
            Eigen::LLT<MatrixXd> llt(Z_[b]);
            if (llt.info() != Eigen::Success) {
                Zi_[b] = Z_[b].completeOrthogonalDecomposition().pseudoInverse();
            } else {
                Zi_[b] = llt.solve(MatrixXd::Identity(Z_[b].rows(), Z_[b].cols()));
            }
            Zi_[b] = 0.5 * (Zi_[b] + Zi_[b].transpose());
        }
    }

    MatrixXd block_value(size_t b, const VectorXd& v, bool with_constant) const
    {
        const auto& blk = prob_.blocks[b];
        MatrixXd F = with_constant ? blk.F0 : MatrixXd::Zero(blk.size(), blk.size());
        if (!blk.p_terms.empty()) {
            const MatrixXd P = unpack_p(v.head(nsvec_), prob_.p_dim);
            for (const auto& t : blk.p_terms) {
                F.noalias() += t.L.transpose() * P * t.R;
            }
        }
        for (const auto& s : blk.scalar_terms) {
            F += v(nsvec_ + s.index) * s.G;
        }
        return 0.5 * (F + F.transpose());
    }

    BlockMats dual_residual() const
    {
        BlockMats Rd(Z_.size());
        for (size_t b = 0; b < Z_.size(); ++b) {
            Rd[b] = block_value(b, y_, true) - Z_[b];
        }
        return Rd;
    }

    /// (tr(F_i M))_i for block-diagonal M (need not be symmetric).
    VectorXd apply_a(const BlockMats& M) const
    {
        VectorXd out = VectorXd::Zero(nvar_);
        const int m = prob_.p_dim;
        for (size_t b = 0; b < M.size(); ++b) {
            const auto& blk = prob_.blocks[b];
            if (!blk.p_terms.empty()) {
                MatrixXd K = MatrixXd::Zero(m, m);
                for (const auto& t : blk.p_terms) {
                    K.noalias() += t.R * M[b] * t.L.transpose();
                }
                for (int p = 0; p < nsvec_; ++p) {
                    const int i = idx_.row[p];
                    const int j = idx_.col[p];
                    out(p) += (i == j) ? K(i, i) : K(i, j) + K(j, i);
                }
            }
            for (const auto& s : blk.scalar_terms) {
                out(nsvec_ + s.index) += s.G.cwiseProduct(M[b]).sum();
            }
        }
        return out;
    }

    bool primal_ray_found(double f0x) const
    {
        if (f0x >= 0.0) {
            return false;
        }
        const VectorXd ax = apply_a(X_);
        return ax.norm() <= 1e-8 * std::abs(f0x) && std::abs(f0x) > 1e8 * (1.0 + c_.norm());
    }

    bool factor_schur()
    {
        assemble_schur();
        return factor_assembled();
    }

    void assemble_schur()
    {
        const int nv = nvar_;
        const int m = prob_.p_dim;
        O_.setZero(nv, nv);
        auto O = [&](int r, int c) -> double& { return O_(r, c); };

        for (size_t b = 0; b < prob_.blocks.size(); ++b) {
            const auto& blk = prob_.blocks[b];
            const MatrixXd& X = X_[b];
            const MatrixXd& Zi = Zi_[b];
            const int nh = static_cast<int>(blk.p_terms.size());

            if (nh > 0 && m > 0) {
                // P-P part: O_pq = tr(F_p X F_q Z^-1) summed over half-term pairs.
                std::vector<MatrixXd> Ms, NTs;
                for (int h = 0; h < nh; ++h) {
                    const MatrixXd RX = blk.p_terms[h].R * X;
                    const MatrixXd LZ = blk.p_terms[h].L * Zi;
                    for (int g = 0; g < nh; ++g) {
                        Ms.push_back(RX * blk.p_terms[g].L.transpose());
                        NTs.push_back(LZ * blk.p_terms[g].R.transpose());
                    }
                }
                const int np = static_cast<int>(Ms.size());
                MatrixXd Am(m, 2 * np);
                MatrixXd Bm(m, 2 * np);
                MatrixXd Y(m, m);
                for (int p = 0; p < nsvec_; ++p) {
                    const int i = idx_.row[p];
                    const int j = idx_.col[p];
                    for (int k = 0; k < np; ++k) {
                        Am.col(2 * k) = Ms[k].row(j).transpose();
                        Bm.col(2 * k) = NTs[k].row(i).transpose();
                        Am.col(2 * k + 1) = Ms[k].row(i).transpose();
                        Bm.col(2 * k + 1) = NTs[k].row(j).transpose();
                    }
                    Y.noalias() = Am * Bm.transpose();
                    const double fp = (i == j) ? 0.5 : 1.0;
                    for (int q = p; q < nsvec_; ++q) {
                        const int k = idx_.row[q];
                        const int l = idx_.col[q];
                        const double fq = (k == l) ? 0.5 : 1.0;
                        O(p, q) += fp * fq * (Y(k, l) + Y(l, k));
                    }
                }
            }

            for (const auto& s : blk.scalar_terms) {
                const MatrixXd XGZ = X * s.G * Zi;
                const int col = nsvec_ + s.index;
                if (nh > 0 && m > 0) {
                    MatrixXd K = MatrixXd::Zero(m, m);
                    for (const auto& t : blk.p_terms) {
                        K.noalias() += t.R * XGZ * t.L.transpose();
                    }
                    for (int p = 0; p < nsvec_; ++p) {
                        const int i = idx_.row[p];
                        const int j = idx_.col[p];
                        O(p, col) += (i == j) ? K(i, i) : K(i, j) + K(j, i);
                    }
                }
                for (const auto& t : blk.scalar_terms) {
                    const int row = nsvec_ + t.index;
                    if (row <= col) {
                        O(row, col) += t.G.cwiseProduct(XGZ.transpose()).sum();
                    }
                }
            }
        }
    }

    bool factor_assembled()
    {
        const int nv = nvar_;
        double max_diag = 0.0;
        for (int i = 0; i < nv; ++i) {
            // Variables that appear in no block get a unit diagonal.
            if (O_(i, i) == 0.0) {
                O_(i, i) = 1.0;
            }
            max_diag = std::max(max_diag, O_(i, i));
        }
        const MatrixXd backup = O_;
        double shift = 0.0;
        for (int attempt = 0; attempt < 6; ++attempt) {
            if (attempt > 0) {
                O_ = backup;
                shift = (shift == 0.0) ? 1e-14 * std::max(1.0, max_diag) : shift * 100.0;
                O_.diagonal().array() += shift;
            }
            Eigen::LLT<Eigen::Ref<MatrixXd>, Eigen::Upper> llt(O_);
            if (llt.info() == Eigen::Success) {
                return true;
            }
            if (opt_.verbose) {
                std::fprintf(stderr, "sdp schur factorization failed (shift %.2e)\n", shift);
            }
        }
        return false;
    }

    VectorXd solve_schur(const VectorXd& rhs) const
    {
        // O = U^T U with U stored in the upper triangle.
        VectorXd x = O_.triangularView<Eigen::Upper>().transpose().solve(rhs);
        O_.triangularView<Eigen::Upper>().solveInPlace(x);
        return x;
    }

    void direction(const BlockMats& T, const BlockMats& Rd, const VectorXd& rp, BlockMats& dX, VectorXd& dy,
                   BlockMats& dZ) const
    {
        BlockMats G(T.size());
        for (size_t b = 0; b < T.size(); ++b) {
            G[b] = T[b] - X_[b] * Rd[b] * Zi_[b];
        }
        const VectorXd rhs = apply_a(G) - rp;
        dy = solve_schur(rhs);
        dX.resize(T.size());
        dZ.resize(T.size());
        for (size_t b = 0; b < T.size(); ++b) {
            dZ[b] = block_value(b, dy, false) + Rd[b];
            MatrixXd d = T[b] - X_[b] * dZ[b] * Zi_[b];
            dX[b] = 0.5 * (d + d.transpose());
        }
    }

    static double max_step(const BlockMats& S, const BlockMats& dS)
    {
        double step = std::numeric_limits<double>::infinity();
        for (size_t b = 0; b < S.size(); ++b) {
            Eigen::LLT<MatrixXd> llt(S[b]);
            if (llt.info() != Eigen::Success) {
                return 0.0;
            }
            const MatrixXd Li = llt.matrixL().solve(MatrixXd::Identity(S[b].rows(), S[b].cols()));
            const MatrixXd W = Li * dS[b] * Li.transpose();
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (W + W.transpose()), Eigen::EigenvaluesOnly);
            const double lmin = es.eigenvalues()(0);
            if (lmin < 0.0) {
                step = std::min(step, -1.0 / lmin);
            }
        }
        return step;
    }

    Result snapshot(Status st, int it, double pinf, double dinf, double gap) const
    {
        Result r;
        r.status = st;
        r.iterations = it;
        r.P = unpack_p(y_.head(nsvec_), prob_.p_dim);
        r.y = y_.tail(prob_.n_scalars);
        r.objective = prob_.cost.dot(r.y);
        r.primal_infeasibility = pinf;
        r.dual_infeasibility = dinf;
        r.relative_gap = gap;
        return r;
    }
};

} // namespace detail

inline Result solve(const LmiProblem& problem, const Options& options = {})
{
    problem.validate();
    detail::Engine engine(problem, options);
    return engine.run();
}

/// Largest eigenvalue of the negated block (<= 0 means the block is PSD).
inline double violation(const LmiBlock& block, const MatrixXd& P, const VectorXd& y)
{
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(block.evaluate(P, y), Eigen::EigenvaluesOnly);
    return -es.eigenvalues()(0);
}

} // namespace rompc::sdp
