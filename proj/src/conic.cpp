#include "isac/conic/solver.hpp"
#include <cstdio>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace isac::conic {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

struct Work {
    const Problem* prob = nullptr;
    int n = 0, m = 0, nf = 0;
    Eigen::SparseMatrix<double> a;        // scaled
    Eigen::VectorXd b, c;                 // scaled
    Eigen::VectorXd col_scale, row_scale; // x = col_scale .* x_scaled / sigma
    double sigma = 1.0, rho = 1.0;
    std::vector<ConeBlock> cone_blocks; // without free blocks
    std::vector<ConeBlock> free_blocks;
    std::vector<Eigen::MatrixXd> a_cone; // dense m x dim per cone block
    Eigen::MatrixXd a_free;              // m x nf
    double nu = 0.0;
};

// ---------------------------------------------------------------- barriers

bool psd_factor(const Eigen::VectorXd& v, int side, Eigen::LLT<Eigen::MatrixXd>& llt) {
    const Eigen::MatrixXd x = Problem::smat(v, side);
    llt.compute(x);
    if (llt.info() != Eigen::Success) return false;
    return llt.matrixLLT().diagonal().minCoeff() > 0.0;
}

bool block_interior(const ConeBlock& blk, const Eigen::Ref<const Eigen::VectorXd>& v) {
    switch (blk.type) {
        case ConeType::nonneg:
            return (v.array() > 0.0).all();
        case ConeType::soc: {
            if (v(0) <= 0.0) return false;
            return v(0) * v(0) - v.tail(v.size() - 1).squaredNorm() > 0.0;
        }
        case ConeType::psd: {
            Eigen::LLT<Eigen::MatrixXd> llt;
            return psd_factor(v, blk.side, llt);
        }
        case ConeType::exp_cone: {
            const double x = v(0), y = v(1), z = v(2);
            if (y <= 0.0 || z <= 0.0) return false;
            return y * std::log(z / y) - x > 0.0;
        }
        default:
            return true;
    }
}

void block_init(const ConeBlock& blk, Eigen::Ref<Eigen::VectorXd> v) {
    switch (blk.type) {
        case ConeType::nonneg:
            v.setOnes();
            break;
        case ConeType::soc:
            v.setZero();
            v(0) = 1.0;
            break;
        case ConeType::psd:
            v = Problem::svec(Eigen::MatrixXd::Identity(blk.side, blk.side));
            break;
        case ConeType::exp_cone:
            v(0) = -1.051383945322714;
            v(1) = 0.556409619469370;
            v(2) = 1.258967884768947;
            break;
        default:
            v.setZero();
            break;
    }
}

void block_grad(const ConeBlock& blk, const Eigen::Ref<const Eigen::VectorXd>& v,
                Eigen::Ref<Eigen::VectorXd> g) {
    switch (blk.type) {
        case ConeType::nonneg:
            g = -v.cwiseInverse();
            break;
        case ConeType::soc: {
            const double d = v(0) * v(0) - v.tail(v.size() - 1).squaredNorm();
            g(0) = -2.0 * v(0) / d;
            g.tail(v.size() - 1) = (2.0 / d) * v.tail(v.size() - 1);
            break;
        }
        case ConeType::psd: {
            Eigen::LLT<Eigen::MatrixXd> llt;
            psd_factor(v, blk.side, llt);
            const Eigen::MatrixXd inv =
                llt.solve(Eigen::MatrixXd::Identity(blk.side, blk.side));
            g = -Problem::svec(0.5 * (inv + inv.transpose()));
            break;
        }
        case ConeType::exp_cone: {
            const double x = v(0), y = v(1), z = v(2);
            const double lzy = std::log(z / y);
            const double psi = y * lzy - x;
            g(0) = 1.0 / psi;
            g(1) = -(lzy - 1.0) / psi - 1.0 / y;
            g(2) = -y / (z * psi) - 1.0 / z;
            break;
        }
        default:
            g.setZero();
            break;
    }
}

Eigen::Matrix3d exp_hessian(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double x = v(0), y = v(1), z = v(2);
    const double lzy = std::log(z / y);
    const double psi = y * lzy - x;
    Eigen::Vector3d u(-1.0, lzy - 1.0, y / z);
    Eigen::Matrix3d h = u * u.transpose() / (psi * psi);
    h(1, 1) += 1.0 / (psi * y) + 1.0 / (y * y);
    h(1, 2) += -1.0 / (psi * z);
    h(2, 1) += -1.0 / (psi * z);
    h(2, 2) += y / (psi * z * z) + 1.0 / (z * z);
    return h;
}

/// Applies H(v)^{-1} to each column of rhs.
void block_hess_inv(const ConeBlock& blk, const Eigen::Ref<const Eigen::VectorXd>& v,
                    const Eigen::Ref<const Eigen::MatrixXd>& rhs, Eigen::Ref<Eigen::MatrixXd> out) {
    switch (blk.type) {
        case ConeType::nonneg: {
            const Eigen::ArrayXd v2 = v.array().square();
            out = rhs.array().colwise() * v2;
            break;
        }
        case ConeType::soc: {
            const double d = v(0) * v(0) - v.tail(v.size() - 1).squaredNorm();
            for (int c = 0; c < rhs.cols(); ++c) {
                const auto r = rhs.col(c);
                const double xv = v.dot(r);
                out(0, c) = -0.5 * d * r(0) + xv * v(0);
                out.col(c).tail(v.size() - 1) =
                    0.5 * d * r.tail(v.size() - 1) + xv * v.tail(v.size() - 1);
            }
            break;
        }
        case ConeType::psd: {
            const Eigen::MatrixXd x = Problem::smat(v, blk.side);
            for (int c = 0; c < rhs.cols(); ++c) {
                const Eigen::MatrixXd u = Problem::smat(rhs.col(c), blk.side);
                Eigen::MatrixXd xux = x * u * x;
                out.col(c) = Problem::svec(0.5 * (xux + xux.transpose()));
            }
            break;
        }
        case ConeType::exp_cone: {
            const Eigen::Matrix3d h = exp_hessian(v);
            out = h.ldlt().solve(rhs);
            break;
        }
        default:
            out.setZero();
            break;
    }
}

double block_inv_norm2(const ConeBlock& blk, const Eigen::Ref<const Eigen::VectorXd>& v,
                       const Eigen::Ref<const Eigen::VectorXd>& zeta) {
    Eigen::MatrixXd out(zeta.size(), 1);
    block_hess_inv(blk, v, zeta, out);
    const double q = zeta.dot(out.col(0));
    return std::max(q, 0.0);
}

double block_nu(const ConeBlock& blk) {
    switch (blk.type) {
        case ConeType::nonneg: return blk.dim;
        case ConeType::soc: return 2.0;
        case ConeType::psd: return blk.side;
        case ConeType::exp_cone: return 3.0;
        default: return 0.0;
    }
}

// ------------------------------------------------------------- state

struct State {
    Eigen::VectorXd x, y, s;
    double tau = 1.0, kappa = 1.0;
    double mu(double nu_bar) const { return (x.dot(s) + tau * kappa) / nu_bar; }
};

struct Direction {
    Eigen::VectorXd dx, dy, ds;
    double dtau = 0.0, dkappa = 0.0;
};

bool interior(const Work& w, const State& st) {
    if (st.tau <= 0.0 || st.kappa <= 0.0) return false;
    for (const auto& blk : w.cone_blocks)
        if (!block_interior(blk, st.x.segment(blk.offset, blk.dim))) return false;
    return true;
}

Eigen::VectorXd full_grad(const Work& w, const State& st) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(w.n);
    for (const auto& blk : w.cone_blocks)
        block_grad(blk, st.x.segment(blk.offset, blk.dim), g.segment(blk.offset, blk.dim));
    return g;
}

double proximity(const Work& w, const State& st) {
    const double mu = st.mu(w.nu + 1.0);
    if (mu <= 0.0) return std::numeric_limits<double>::infinity();
    double q = 0.0;
    Eigen::VectorXd g(w.n);
    g.setZero();
    for (const auto& blk : w.cone_blocks) {
        const auto xb = st.x.segment(blk.offset, blk.dim);
        Eigen::VectorXd gb(blk.dim);
        block_grad(blk, xb, gb);
        const Eigen::VectorXd zeta = st.s.segment(blk.offset, blk.dim) + mu * gb;
        q += block_inv_norm2(blk, xb, zeta);
    }
    const double zk = st.kappa - mu / st.tau;
    q += zk * zk * st.tau * st.tau;
    return std::sqrt(q) / mu;
}

// Newton saddle solver: factors [[S, A_F],[A_F^T, 0]] once per point.
struct KktSolver {
    const Work* w;
    double mu;
    const State* st;
    Eigen::LDLT<Eigen::MatrixXd> ldlt;
    std::vector<Eigen::MatrixXd> hinv_at; // per cone block: H^{-1} A_B^T / mu
    Eigen::MatrixXd saddle;

    void factor(const Work& work, const State& state, double mu_) {
        w = &work;
        st = &state;
        mu = mu_;
        const int m = work.m, nf = work.nf;
        Eigen::MatrixXd s_mat = Eigen::MatrixXd::Zero(m, m);
        hinv_at.resize(work.cone_blocks.size());
        for (size_t i = 0; i < work.cone_blocks.size(); ++i) {
            const auto& blk = work.cone_blocks[i];
            hinv_at[i].resize(blk.dim, m);
            block_hess_inv(blk, state.x.segment(blk.offset, blk.dim),
                           work.a_cone[i].transpose(), hinv_at[i]);
            hinv_at[i] /= mu;
            s_mat.noalias() += work.a_cone[i] * hinv_at[i];
        }
        saddle.resize(m + nf, m + nf);
        saddle.setZero();
        saddle.topLeftCorner(m, m) = s_mat;
        if (nf > 0) {
            saddle.topRightCorner(m, nf) = work.a_free;
            saddle.bottomLeftCorner(nf, m) = work.a_free.transpose();
        }
        Eigen::MatrixXd reg_saddle = saddle;
        const double reg = 1e-13 * (1.0 + s_mat.diagonal().cwiseAbs().maxCoeff());
        for (int i = 0; i < m; ++i) reg_saddle(i, i) += reg;
        for (int i = 0; i < nf; ++i) reg_saddle(m + i, m + i) -= reg;
        ldlt.compute(reg_saddle);
    }

    // Solves  mu H dx - A^T dy = qx ;  A dx = qy  (free rows have H = 0).
    void solve(const Eigen::VectorXd& qx, const Eigen::VectorXd& qy, Eigen::VectorXd& dx,
               Eigen::VectorXd& dy) const {
        const int m = w->m, nf = w->nf;
        Eigen::VectorXd rhs(m + nf);
        rhs.head(m) = qy;
        for (size_t i = 0; i < w->cone_blocks.size(); ++i) {
            const auto& blk = w->cone_blocks[i];
            rhs.head(m).noalias() -=
                hinv_at[i].transpose() * qx.segment(blk.offset, blk.dim);
        }
        int fidx = 0;
        for (const auto& blk : w->free_blocks) {
            rhs.segment(m + fidx, blk.dim) = -qx.segment(blk.offset, blk.dim);
            fidx += blk.dim;
        }
        Eigen::VectorXd sol = ldlt.solve(rhs);
        for (int round = 0; round < 3; ++round) {
            const Eigen::VectorXd resid = rhs - saddle * sol;
            if (resid.lpNorm<Eigen::Infinity>() <
                1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>()))
                break;
            sol += ldlt.solve(resid);
        }
        dy = sol.head(m);

        dx.resize(w->n);
        for (size_t i = 0; i < w->cone_blocks.size(); ++i) {
            const auto& blk = w->cone_blocks[i];
            Eigen::VectorXd tmp = qx.segment(blk.offset, blk.dim);
            Eigen::MatrixXd hv(blk.dim, 1);
            block_hess_inv(blk, st->x.segment(blk.offset, blk.dim), tmp, hv);
            dx.segment(blk.offset, blk.dim) =
                hv.col(0) / mu + hinv_at[i] * dy;
        }
        fidx = 0;
        for (const auto& blk : w->free_blocks) {
            dx.segment(blk.offset, blk.dim) = sol.segment(m + fidx, blk.dim);
            fidx += blk.dim;
        }
    }
};

/// gamma = 0: predictor (drive residuals and complementarity down);
/// gamma = 1: pure centering.
Direction newton_direction(const Work& w, const State& st, const KktSolver& kkt, double gamma) {
    const double mu = st.mu(w.nu + 1.0);
    const Eigen::VectorXd g = full_grad(w, st);

    const Eigen::VectorXd rp = w.a * st.x - w.b * st.tau;
    const Eigen::VectorXd rd =
        -Eigen::VectorXd(w.a.transpose() * st.y) - st.s + w.c * st.tau;
    const double rg = w.b.dot(st.y) - w.c.dot(st.x) - st.kappa;

    const Eigen::VectorXd r4 = -st.s - gamma * mu * g;
    const double r5 = -st.kappa + gamma * mu / st.tau;

    const Eigen::VectorXd qx = -(1.0 - gamma) * rd + r4;
    const Eigen::VectorXd qy = -(1.0 - gamma) * rp;
    const double qt = -(1.0 - gamma) * rg + r5;

    Eigen::VectorXd x1, y1, x2, y2;
    kkt.solve(qx, qy, x1, y1);
    kkt.solve(-w.c, w.b, x2, y2);

    const double denom = mu / (st.tau * st.tau) + (w.b.dot(y2) - w.c.dot(x2));
    double dtau = (qt - w.b.dot(y1) + w.c.dot(x1)) / denom;
    if (!std::isfinite(dtau)) dtau = 0.0;

    Direction dir;
    dir.dtau = dtau;
    dir.dx = x1 + dtau * x2;
    dir.dy = y1 + dtau * y2;

    // The saddle rows give mu H dx = (qx - c dtau) + A^T dy on cone blocks,
    // so ds = r4 - mu H dx needs no extra Hessian product. Free rows carry
    // ds = r4 = -s.
    dir.ds.resize(w.n);
    const Eigen::VectorXd at_dy = w.a.transpose() * dir.dy;
    for (const auto& blk : w.cone_blocks) {
        dir.ds.segment(blk.offset, blk.dim) =
            r4.segment(blk.offset, blk.dim) -
            (qx.segment(blk.offset, blk.dim) - dtau * w.c.segment(blk.offset, blk.dim) +
             at_dy.segment(blk.offset, blk.dim));
    }
    for (const auto& blk : w.free_blocks)
        dir.ds.segment(blk.offset, blk.dim) = r4.segment(blk.offset, blk.dim);
    dir.dkappa = r5 - (mu / (st.tau * st.tau)) * dtau;
    return dir;
}

State advance(const State& st, const Direction& dir, double alpha) {
    State out = st;
    out.x += alpha * dir.dx;
    out.y += alpha * dir.dy;
    out.s += alpha * dir.ds;
    out.tau += alpha * dir.dtau;
    out.kappa += alpha * dir.dkappa;
    return out;
}

} // namespace

int Problem::svec_index(int i, int j, int side) {
    // lower triangle, column major; i >= j
    return j * side - j * (j - 1) / 2 + (i - j);
}

Eigen::VectorXd Problem::svec(const Eigen::MatrixXd& m) {
    const int n = static_cast<int>(m.rows());
    Eigen::VectorXd v(svec_dim(n));
    int idx = 0;
    for (int j = 0; j < n; ++j)
        for (int i = j; i < n; ++i)
            v(idx++) = (i == j) ? m(i, j) : kSqrt2 * 0.5 * (m(i, j) + m(j, i));
    return v;
}

Eigen::MatrixXd Problem::smat(const Eigen::VectorXd& v, int side) {
    Eigen::MatrixXd m(side, side);
    int idx = 0;
    for (int j = 0; j < side; ++j) {
        for (int i = j; i < side; ++i) {
            const double val = v(idx++);
            if (i == j)
                m(i, j) = val;
            else
                m(i, j) = m(j, i) = val / kSqrt2;
        }
    }
    return m;
}

Solution Solver::solve(const Problem& prob) const {
    Work w;
    w.prob = &prob;
    w.n = prob.num_vars();
    w.m = prob.num_rows();
    for (const auto& blk : prob.blocks()) {
        if (blk.type == ConeType::free_vars) {
            w.free_blocks.push_back(blk);
            w.nf += blk.dim;
        } else {
            w.cone_blocks.push_back(blk);
            w.nu += block_nu(blk);
        }
    }

    Eigen::SparseMatrix<double> a_orig(w.m, w.n);
    a_orig.setFromTriplets(prob.triplets_.begin(), prob.triplets_.end());
    Eigen::VectorXd b_orig = Eigen::Map<const Eigen::VectorXd>(prob.b_.data(), w.m);
    Eigen::VectorXd c_orig = Eigen::VectorXd::Zero(w.n);
    for (const auto& [col, val] : prob.obj_) c_orig(col) += val;

    // Ruiz-style equilibration: row scales free, column scales uniform
    // within each cone block (cones are invariant to positive scaling).
    w.row_scale = Eigen::VectorXd::Ones(w.m);
    w.col_scale = Eigen::VectorXd::Ones(w.n);
    Eigen::MatrixXd ad = Eigen::MatrixXd(a_orig);
    for (int pass = 0; pass < 4; ++pass) {
        for (int i = 0; i < w.m; ++i) {
            const double r = ad.row(i).cwiseAbs().maxCoeff();
            if (r > 0) {
                const double s = 1.0 / std::sqrt(r);
                ad.row(i) *= s;
                w.row_scale(i) *= s;
            }
        }
        for (const auto& blk : prob.blocks()) {
            if (blk.type == ConeType::free_vars || blk.type == ConeType::nonneg) {
                for (int jj = blk.offset; jj < blk.offset + blk.dim; ++jj) {
                    const double cmax = ad.col(jj).cwiseAbs().maxCoeff();
                    if (cmax > 0) {
                        const double s = 1.0 / std::sqrt(cmax);
                        ad.col(jj) *= s;
                        w.col_scale(jj) *= s;
                    }
                }
            } else {
                double cmax = 0.0;
                for (int jj = blk.offset; jj < blk.offset + blk.dim; ++jj)
                    cmax = std::max(cmax, ad.col(jj).cwiseAbs().maxCoeff());
                if (cmax > 0) {
                    const double s = 1.0 / std::sqrt(cmax);
                    for (int jj = blk.offset; jj < blk.offset + blk.dim; ++jj) {
                        ad.col(jj) *= s;
                        w.col_scale(jj) *= s;
                    }
                }
            }
        }
    }
    w.a = ad.sparseView();
    w.b = w.row_scale.asDiagonal() * b_orig;
    w.c = w.col_scale.asDiagonal() * c_orig;
    w.sigma = 1.0 / std::max(1.0, w.b.cwiseAbs().maxCoeff());
    w.rho = 1.0 / std::max(1.0, w.c.cwiseAbs().maxCoeff());
    w.b *= w.sigma;
    w.c *= w.rho;

    w.a_cone.reserve(w.cone_blocks.size());
    Eigen::MatrixXd a_dense(w.a);
    for (const auto& blk : w.cone_blocks)
        w.a_cone.push_back(a_dense.middleCols(blk.offset, blk.dim));
    if (w.nf > 0) {
        w.a_free.resize(w.m, w.nf);
        int fidx = 0;
        for (const auto& blk : w.free_blocks) {
            w.a_free.middleCols(fidx, blk.dim) = a_dense.middleCols(blk.offset, blk.dim);
            fidx += blk.dim;
        }
    }

    State st;
    st.x.resize(w.n);
    st.s = Eigen::VectorXd::Zero(w.n);
    st.y = Eigen::VectorXd::Zero(w.m);
    for (const auto& blk : prob.blocks()) block_init(blk, st.x.segment(blk.offset, blk.dim));
    {
        Eigen::VectorXd g = full_grad(w, st);
        st.s = -g;
    }
    st.tau = 1.0;
    st.kappa = 1.0;

    Solution best;
    double best_metric = std::numeric_limits<double>::infinity();

    // Projects the de-homogenized primal point exactly onto Ax = b; the
    // normal-equation formation of the Newton system leaves a small primal
    // residual floor that this removes.
    Eigen::MatrixXd aat = Eigen::MatrixXd(a_orig) * Eigen::MatrixXd(a_orig).transpose();
    for (int i = 0; i < w.m; ++i) aat(i, i) += 1e-14 * (1.0 + aat(i, i));
    Eigen::LDLT<Eigen::MatrixXd> aat_ldlt(aat);
    auto polish = [&](Solution sol) {
        for (int round = 0; round < 2; ++round) {
            const Eigen::VectorXd resid = b_orig - a_orig * sol.x;
            sol.x += a_orig.transpose() * aat_ldlt.solve(resid);
        }
        const Eigen::VectorXd ax = a_orig * sol.x;
        sol.primal_residual =
            (ax - b_orig).lpNorm<Eigen::Infinity>() /
            (1.0 + std::max(ax.lpNorm<Eigen::Infinity>(), b_orig.lpNorm<Eigen::Infinity>()));
        sol.objective = c_orig.dot(sol.x);
        return sol;
    };

    auto evaluate = [&](const State& s_eval) {
        Solution sol;
        const double tau = s_eval.tau;
        Eigen::VectorXd x = w.col_scale.asDiagonal() * s_eval.x / (tau * w.sigma);
        Eigen::VectorXd y = w.row_scale.asDiagonal() * s_eval.y / (tau * w.rho);
        Eigen::VectorXd s = (s_eval.s.array() / w.col_scale.array()).matrix() / (tau * w.rho);
        const double pobj = c_orig.dot(x);
        const double dobj = b_orig.dot(y);
        sol.x = x;
        sol.y = y;
        sol.s = s;
        sol.objective = pobj;
        const Eigen::VectorXd ax = a_orig * x;
        const Eigen::VectorXd aty = a_orig.transpose() * y;
        sol.primal_residual =
            (ax - b_orig).lpNorm<Eigen::Infinity>() /
            (1.0 + std::max(ax.lpNorm<Eigen::Infinity>(), b_orig.lpNorm<Eigen::Infinity>()));
        sol.dual_residual =
            (aty + s - c_orig).lpNorm<Eigen::Infinity>() /
            (1.0 + std::max({aty.lpNorm<Eigen::Infinity>(), s.lpNorm<Eigen::Infinity>(),
                             c_orig.lpNorm<Eigen::Infinity>()}));
        sol.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
        return sol;
    };

    int stall = 0;
    const double nu_bar = w.nu + 1.0;
    double last_alpha = 0.0;
    double best_pinf = std::numeric_limits<double>::infinity();
    double best_dinf = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < opts_.max_iterations; ++iter) {
        const double mu = st.mu(nu_bar);

        Solution cur = evaluate(st);
        cur.iterations = iter;
        if (opts_.verbose)
            std::printf("it %3d mu %9.2e tau %9.2e kappa %9.2e pres %9.2e dres %9.2e gap %9.2e "
                        "alpha %6.3f prox %6.3f\n",
                        iter, mu, st.tau, st.kappa, cur.primal_residual, cur.dual_residual,
                        cur.gap, last_alpha, proximity(w, st));
        const double metric = std::max({cur.primal_residual, cur.dual_residual, cur.gap});
        if (metric < best_metric) {
            best_metric = metric;
            best = cur;
        }
        if (cur.dual_residual <= opts_.eps_feas && cur.gap <= opts_.eps_gap &&
            cur.primal_residual <= 1e3 * opts_.eps_feas) {
            Solution out = cur.primal_residual <= opts_.eps_feas ? cur : polish(cur);
            if (out.primal_residual <= opts_.eps_feas) {
                out.status = SolveStatus::optimal;
                return out;
            }
        }

        // Infeasibility certificates on the scaled iterates. The ratios are
        // scale invariant (y normalized by b^T y, x by -c^T x).
        {
            const double by = w.b.dot(st.y);
            if (by > 0.0) {
                const double res =
                    (Eigen::VectorXd(w.a.transpose() * st.y) + st.s).lpNorm<Eigen::Infinity>() /
                    by;
                best_pinf = std::min(best_pinf, res);
                if (res <= 1e-7) {
                    Solution sol = cur;
                    sol.status = SolveStatus::infeasible;
                    sol.detail = "primal infeasibility certificate";
                    return sol;
                }
            }
            const double cx = w.c.dot(st.x);
            if (cx < 0.0) {
                const double res = (w.a * st.x).lpNorm<Eigen::Infinity>() / (-cx);
                best_dinf = std::min(best_dinf, res);
                if (res <= 1e-7) {
                    Solution sol = cur;
                    sol.status = SolveStatus::numerical_failure;
                    sol.detail = "dual infeasibility certificate (objective unbounded)";
                    return sol;
                }
            }
            if (opts_.verbose)
                std::printf("      cert: pinf %9.2e dinf %9.2e tau/kappa %9.2e\n", best_pinf,
                            best_dinf, st.tau / std::max(st.kappa, 1e-300));
        }

        KktSolver kkt;
        kkt.factor(w, st, mu);

        // Mehrotra-style adaptive centering: probe the affine direction's
        // reach, then recompute with gamma = (1 - alpha_aff)^3.
        const Direction aff = newton_direction(w, st, kkt, 0.0);
        double alpha_aff = 1.0;
        for (int ls = 0; ls < 40; ++ls) {
            if (interior(w, advance(st, aff, alpha_aff))) break;
            alpha_aff *= 0.7;
        }
        const double gamma =
            std::min(1.0, std::pow(1.0 - alpha_aff, 3.0));
        const Direction pred =
            gamma > 1e-8 ? newton_direction(w, st, kkt, gamma) : aff;

        double alpha = 1.0;
        State next = st;
        bool stepped = false;
        for (int ls = 0; ls < 60; ++ls) {
            State trial = advance(st, pred, alpha);
            if (interior(w, trial) && proximity(w, trial) <= opts_.beta_wide) {
                next = trial;
                stepped = true;
                break;
            }
            alpha *= 0.7;
        }
        last_alpha = stepped ? alpha : 0.0;
        if (!stepped || alpha < 1e-9) {
            if (++stall >= 3) break;
        } else {
            stall = 0;
        }
        st = next;

        for (int corr = 0; corr < opts_.max_correctors; ++corr) {
            if (proximity(w, st) <= opts_.beta_center) break;
            KktSolver ckkt;
            ckkt.factor(w, st, st.mu(nu_bar));
            const Direction cdir = newton_direction(w, st, ckkt, 1.0);
            double ca = 1.0;
            const double prox0 = proximity(w, st);
            for (int ls = 0; ls < 40; ++ls) {
                State trial = advance(st, cdir, ca);
                if (interior(w, trial) && proximity(w, trial) < prox0) {
                    st = trial;
                    break;
                }
                ca *= 0.5;
            }
            if (ca < 1e-10) break;
        }

        if (st.mu(nu_bar) < 1e-13) break;
    }

    // The iterate collapsed onto a ray (tau << kappa) without meeting the
    // strict certificate bound: classify by the best certificate seen.
    if (st.tau <= 1e-3 * st.kappa) {
        if (best_pinf <= 1e-2 && best_pinf <= 1e-2 * best_dinf) {
            best.status = SolveStatus::infeasible;
            best.detail = "primal infeasibility (ray)";
            return best;
        }
        if (best_dinf <= 1e-2) {
            best.status = SolveStatus::numerical_failure;
            best.detail = "dual infeasibility (ray)";
            return best;
        }
    }

    best = polish(best);
    if (std::max({best.primal_residual, best.dual_residual, best.gap}) <= 1e-6) {
        best.status = SolveStatus::optimal;
        best.detail = "loose tolerance";
        return best;
    }
    best.status = SolveStatus::numerical_failure;
    best.detail = "no convergence";
    return best;
}

} // namespace isac::conic
