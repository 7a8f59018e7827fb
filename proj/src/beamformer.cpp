#include "isac/beamformer.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace isac {

namespace {

constexpr double kLn2 = 0.6931471805599453;
// (29) certifies the LMI against a slightly tightened threshold so the
// kappa-level equality drift cannot push the true trace past eta.
constexpr double kEtaTighten = 1e-4;

MatX embed_hermitian(const MatXc& a) {
    const int n = static_cast<int>(a.rows());
    MatX out(2 * n, 2 * n);
    out.topLeftCorner(n, n) = a.real();
    out.bottomRightCorner(n, n) = a.real();
    out.topRightCorner(n, n) = -a.imag();
    out.bottomLeftCorner(n, n) = a.imag();
    return out;
}

MatXc complexify(const MatX& s) {
    const int n = static_cast<int>(s.rows()) / 2;
    MatXc w = (0.5 * (s.topLeftCorner(n, n) + s.bottomRightCorner(n, n))).cast<cplx>();
    w += cplx(0.0, 0.5) * (s.bottomLeftCorner(n, n) - s.topRightCorner(n, n)).cast<cplx>();
    return 0.5 * (w + w.adjoint());
}

VecX realify(const VecXc& v) {
    VecX out(2 * v.size());
    out.head(v.size()) = v.real();
    out.tail(v.size()) = v.imag();
    return out;
}

VecXc complexify_vec(const VecX& x) {
    const Eigen::Index n = x.size() / 2;
    VecXc v(n);
    v.real() = x.head(n);
    v.imag() = x.tail(n);
    return v;
}

/// Signed FIM quadratic coefficient c^i_m: BS m contributes c^i_m * gamma_m
/// to f^i, with gamma_m = sum_k w_k^H gram_m w_k.
Eigen::Vector3d signed_coeff(const QuadraticCoefficients& co, int m) {
    const Vec2 s = co.s_dir[m];
    return {co.quad_gain[m] * s(0) * s(0), co.quad_gain[m] * s(0) * s(1),
            co.quad_gain[m] * s(1) * s(1)};
}

BeamformerSet zero_beams(const BeamProblem& prob) {
    BeamformerSet b;
    b.w.assign(prob.num_bs, std::vector<VecXc>(prob.subcarriers, VecXc::Zero(prob.n_tx)));
    return b;
}

} // namespace

double BeamProblem::predicted_rate(const BeamformerSet& beams) const {
    double r = 0.0;
    for (int k = 0; k < subcarriers; ++k)
        r += std::log2(1.0 + std::norm(h[k].dot(beams.w[serving_bs][k])) / sigma_c2);
    return r;
}

double BeamProblem::crlb_trace(const BeamformerSet& beams) const {
    return pc_crlb_position(fim_blocks(coeffs, beams)).trace;
}

bool BeamProblem::verify_feasible(const BeamformerSet& beams, double power_slack,
                                  double crlb_slack) const {
    for (int m = 0; m < num_bs; ++m)
        if (beams.power(m) > power_budget[m] * (1.0 + power_slack)) return false;
    try {
        return crlb_trace(beams) <= eta * (1.0 + crlb_slack);
    } catch (const std::runtime_error&) {
        return false;
    }
}

BeamProblem build_problem(const Vec4& d_pred, const Mat4& m_pred, const ScenarioConfig& cfg) {
    BeamProblem prob;
    prob.d_pred = d_pred;
    prob.m_pred = m_pred;
    prob.coeffs = coefficients(d_pred, m_pred, cfg);
    const ChannelSnapshot snap = snapshot(TargetState::from_stacked(d_pred), cfg);
    prob.h.reserve(cfg.subcarriers);
    for (int k = 0; k < cfg.subcarriers; ++k) prob.h.push_back(comm_channel(cfg, snap, k));
    prob.sigma_c2 = cfg.comm_noise_power;
    prob.power_budget = cfg.power_budget;
    prob.eta = cfg.crlb_threshold;
    prob.num_bs = cfg.num_bs();
    prob.subcarriers = cfg.subcarriers;
    prob.n_tx = cfg.n_tx;
    prob.serving_bs = cfg.serving_bs;
    prob.sdr = cfg.sdr_params;
    prob.penalty = cfg.penalty_params;
    return prob;
}

// --------------------------------------------------------------------- SDR

namespace {

struct SdrLayout {
    std::vector<int> w_off; // psd block offsets, index m * K + k
    int xs = 0, xo = 0, xl = 0;
    std::vector<int> exp_off;
    int pow_slack = 0, tpsi = 0;
    int side = 0; // 2 N_t
};

/// Emits matrix-entry equality terms against psd svec coordinates.
struct RowBuilder {
    conic::Problem* p;
    int row;
    void psd_entry(int block_off, int i, int j, int side, double coef) {
        const double s = (i == j) ? 1.0 : 1.0 / std::sqrt(2.0);
        p->set_entry(
            row, block_off + conic::Problem::svec_index(std::max(i, j), std::min(i, j), side),
            coef * s);
    }
    void var(int col, double coef) { p->set_entry(row, col, coef); }
};

SdrLayout build_sdr_model(const BeamProblem& prob, conic::Problem& p) {
    const int m_bs = prob.num_bs, kk = prob.subcarriers;
    SdrLayout lay;
    lay.side = 2 * prob.n_tx;
    for (int m = 0; m < m_bs; ++m)
        for (int k = 0; k < kk; ++k) lay.w_off.push_back(p.add_psd(lay.side));
    lay.xs = p.add_psd(4);
    lay.xo = p.add_psd(2);
    lay.xl = p.add_psd(4);
    for (int k = 0; k < kk; ++k) lay.exp_off.push_back(p.add_exp());
    lay.pow_slack = p.add_nonneg(m_bs);
    lay.tpsi = p.add_nonneg(1);

    // per-BS transmit power: (1/2) sum_k Tr(P_{m,k}) + slack = P_m
    for (int m = 0; m < m_bs; ++m) {
        RowBuilder r{&p, p.add_row(prob.power_budget[m])};
        for (int k = 0; k < kk; ++k)
            for (int d = 0; d < lay.side; ++d)
                r.psd_entry(lay.w_off[m * kk + k], d, d, lay.side, 0.5);
        r.var(lay.pow_slack + m, 1.0);
    }

    // Xs = [[Jpp(W) - Omega, Jpv],[Jpv^T, Jvv]]
    std::vector<VecX> gram_svec(m_bs);
    for (int m = 0; m < m_bs; ++m)
        gram_svec[m] = conic::Problem::svec(embed_hermitian(prob.coeffs.gram[m]));
    const auto emit_jpp_row = [&](int i, int j, int idx) {
        RowBuilder r{&p, p.add_row(prob.coeffs.upsilon[idx])};
        r.psd_entry(lay.xs, i, j, 4, 1.0);
        r.psd_entry(lay.xo, i, j, 2, 1.0);
        for (int m = 0; m < m_bs; ++m) {
            const double c = signed_coeff(prob.coeffs, m)(idx);
            if (c == 0.0) continue;
            for (int k = 0; k < kk; ++k) {
                const int off = lay.w_off[m * kk + k];
                for (int t = 0; t < gram_svec[m].size(); ++t)
                    if (gram_svec[m](t) != 0.0)
                        p.set_entry(r.row, off + t, -0.5 * c * gram_svec[m](t));
            }
        }
    };
    emit_jpp_row(0, 0, 0);
    emit_jpp_row(1, 0, 1);
    emit_jpp_row(1, 1, 2);
    const Mat2 jpv = prob.coeffs.j_pv, jvv = prob.coeffs.j_vv;
    const auto pin = [&](int i, int j, double rhs) {
        RowBuilder r{&p, p.add_row(rhs)};
        r.psd_entry(lay.xs, i, j, 4, 1.0);
    };
    pin(2, 0, jpv(0, 0));
    pin(3, 0, jpv(0, 1));
    pin(2, 1, jpv(1, 0));
    pin(3, 1, jpv(1, 1));
    pin(2, 2, jvv(0, 0));
    pin(3, 2, jvv(1, 0));
    pin(3, 3, jvv(1, 1));

    // Xl = [[Omega, I],[I, Psi]], Tr(Psi) <= eta
    for (int j = 0; j < 2; ++j) {
        for (int i = j; i < 2; ++i) {
            RowBuilder r{&p, p.add_row(0.0)};
            r.psd_entry(lay.xl, i, j, 4, 1.0);
            r.psd_entry(lay.xo, i, j, 2, -1.0);
        }
    }
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            RowBuilder r{&p, p.add_row(i == j ? 1.0 : 0.0)};
            r.psd_entry(lay.xl, 2 + i, j, 4, 1.0);
        }
    }
    {
        RowBuilder r{&p, p.add_row(prob.eta)};
        r.psd_entry(lay.xl, 2, 2, 4, 1.0);
        r.psd_entry(lay.xl, 3, 3, 4, 1.0);
        r.var(lay.tpsi, 1.0);
    }

    // rate epigraphs: y_k = 1, z_k = 1 + Tr(H_k W_{u,k}) / sigma_c^2
    for (int k = 0; k < kk; ++k) {
        {
            RowBuilder r{&p, p.add_row(1.0)};
            r.var(lay.exp_off[k] + 1, 1.0);
        }
        RowBuilder r{&p, p.add_row(1.0)};
        r.var(lay.exp_off[k] + 2, 1.0);
        const MatXc hk = prob.h[k] * prob.h[k].adjoint();
        const VecX hs = conic::Problem::svec(embed_hermitian(hk));
        const int off = lay.w_off[prob.serving_bs * kk + k];
        for (int t = 0; t < hs.size(); ++t)
            if (hs(t) != 0.0) p.set_entry(r.row, off + t, -0.5 * hs(t) / prob.sigma_c2);
        p.set_objective(lay.exp_off[k] + 0, -1.0);
    }
    return lay;
}

/// Constructive rank reduction on the optimal face. Per BS the solution
/// influences the problem only through the power trace, the sensing scalar
/// gamma_m, and (for the serving BS) the per-subcarrier rate traces; moving
/// along null directions of those functionals preserves optimality and
/// feasibility while eigenvalues are driven to zero.
void purify_blocks(const BeamProblem& prob, std::vector<std::vector<MatXc>>& w) {
    const int kk = prob.subcarriers;
    const double p_scale =
        *std::max_element(prob.power_budget.begin(), prob.power_budget.end());
    for (int m = 0; m < prob.num_bs; ++m) {
        const std::vector<MatXc> funcs{MatXc::Identity(prob.n_tx, prob.n_tx),
                                       prob.coeffs.gram[m]};
        const bool serving = (m == prob.serving_bs);

        for (int round = 0; round < 8 * kk; ++round) {
            std::vector<MatXc> v(kk);
            std::vector<int> rank(kk, 0);
            int total_sq = 0;
            for (int k = 0; k < kk; ++k) {
                Eigen::SelfAdjointEigenSolver<MatXc> es(w[m][k]);
                const double lmax = std::max(es.eigenvalues().maxCoeff(), 0.0);
                const double cut = std::max(1e-11 * p_scale / kk, 1e-9 * lmax);
                std::vector<int> keep;
                for (int i = 0; i < prob.n_tx; ++i)
                    if (es.eigenvalues()(i) > cut) keep.push_back(i);
                rank[k] = static_cast<int>(keep.size());
                v[k].resize(prob.n_tx, rank[k]);
                for (int i = 0; i < rank[k]; ++i)
                    v[k].col(i) =
                        es.eigenvectors().col(keep[i]) * std::sqrt(es.eigenvalues()(keep[i]));
                total_sq += rank[k] * rank[k];
            }
            const int n_func = static_cast<int>(funcs.size()) + (serving ? kk : 0);
            if (total_sq <= n_func) break;

            std::vector<int> col_off(kk + 1, 0);
            for (int k = 0; k < kk; ++k) col_off[k + 1] = col_off[k] + rank[k] * rank[k];
            MatX eqs = MatX::Zero(n_func, col_off[kk]);
            const auto fill = [&](int frow, int k, const MatXc& a) {
                if (rank[k] == 0) return;
                const MatXc ma = v[k].adjoint() * a * v[k];
                int c = col_off[k];
                for (int jj = 0; jj < rank[k]; ++jj) {
                    eqs(frow, c++) = ma(jj, jj).real();
                    for (int ii = jj + 1; ii < rank[k]; ++ii) {
                        eqs(frow, c++) = 2.0 * ma(ii, jj).real();
                        eqs(frow, c++) = -2.0 * ma(ii, jj).imag();
                    }
                }
            };
            for (size_t f = 0; f < funcs.size(); ++f)
                for (int k = 0; k < kk; ++k) fill(static_cast<int>(f), k, funcs[f]);
            if (serving)
                for (int k = 0; k < kk; ++k)
                    fill(static_cast<int>(funcs.size()) + k, k,
                         prob.h[k] * prob.h[k].adjoint());

            Eigen::JacobiSVD<MatX> svd(eqs, Eigen::ComputeFullV);
            const int ncols = static_cast<int>(eqs.cols());
            int rank_eqs = 0;
            const double tol = 1e-10 * (1.0 + svd.singularValues()(0));
            for (int i = 0; i < svd.singularValues().size(); ++i)
                if (svd.singularValues()(i) > tol) ++rank_eqs;
            if (rank_eqs >= ncols) break;
            const VecX dir = svd.matrixV().col(ncols - 1);

            std::vector<MatXc> delta(kk);
            double max_eig = 0.0;
            for (int k = 0; k < kk; ++k) {
                delta[k] = MatXc::Zero(rank[k], rank[k]);
                int c = col_off[k];
                for (int jj = 0; jj < rank[k]; ++jj) {
                    delta[k](jj, jj) = dir(c++);
                    for (int ii = jj + 1; ii < rank[k]; ++ii) {
                        const double re = dir(c++);
                        const double im = dir(c++);
                        delta[k](ii, jj) = cplx(re, im);
                        delta[k](jj, ii) = cplx(re, -im);
                    }
                }
                if (rank[k] > 0)
                    max_eig = std::max(
                        max_eig,
                        Eigen::SelfAdjointEigenSolver<MatXc>(delta[k]).eigenvalues().maxCoeff());
            }
            double flip = 1.0;
            if (max_eig <= 1e-14) {
                flip = -1.0;
                max_eig = 0.0;
                for (int k = 0; k < kk; ++k)
                    if (rank[k] > 0)
                        max_eig = std::max(max_eig,
                                           Eigen::SelfAdjointEigenSolver<MatXc>(MatXc(-delta[k]))
                                               .eigenvalues()
                                               .maxCoeff());
                if (max_eig <= 1e-14) break;
            }
            const double t = 1.0 / max_eig;
            for (int k = 0; k < kk; ++k) {
                if (rank[k] == 0) {
                    w[m][k].setZero();
                    continue;
                }
                const MatXc inner =
                    MatXc::Identity(rank[k], rank[k]) - (t * flip) * delta[k];
                w[m][k] = v[k] * inner * v[k].adjoint();
                w[m][k] = 0.5 * (w[m][k] + w[m][k].adjoint());
            }
        }
    }
}

} // namespace

SdrResult solve_sdr(const BeamProblem& prob, const conic::Solver& solver) {
    const auto t0 = std::chrono::steady_clock::now();
    const int kk = prob.subcarriers;
    SdrResult res;
    res.diag.power_used.assign(prob.num_bs, 0.0);

    conic::Problem model;
    const SdrLayout lay = build_sdr_model(prob, model);
    const conic::Solution sol = solver.solve(model);
    res.diag.iterations = sol.iterations;

    if (sol.status == conic::SolveStatus::infeasible) {
        res.diag.status = "infeasible";
        res.beams = zero_beams(prob);
        return res;
    }
    if (sol.status != conic::SolveStatus::optimal) {
        res.diag.status = "failed";
        res.beams = zero_beams(prob);
        return res;
    }

    res.w_blocks.assign(prob.num_bs, std::vector<MatXc>(kk));
    for (int m = 0; m < prob.num_bs; ++m)
        for (int k = 0; k < kk; ++k) {
            const int off = lay.w_off[m * kk + k];
            const int dim = conic::Problem::svec_dim(lay.side);
            res.w_blocks[m][k] =
                complexify(conic::Problem::smat(sol.x.segment(off, dim), lay.side));
        }

    purify_blocks(prob, res.w_blocks);

    double worst_ratio = 0.0;
    const double zero_cut = 1e-9 * prob.power_budget[0] / kk;
    for (int m = 0; m < prob.num_bs; ++m)
        for (int k = 0; k < kk; ++k) {
            Eigen::SelfAdjointEigenSolver<MatXc> es(res.w_blocks[m][k]);
            const double l1 = es.eigenvalues()(prob.n_tx - 1);
            const double l2 = std::max(es.eigenvalues()(prob.n_tx - 2), 0.0);
            if (l1 > zero_cut) worst_ratio = std::max(worst_ratio, l2 / l1);
        }
    res.diag.rank_ratio = worst_ratio;

    const auto extract = [&](const std::vector<std::vector<MatXc>>& blocks) {
        BeamformerSet out = zero_beams(prob);
        for (int m = 0; m < prob.num_bs; ++m)
            for (int k = 0; k < kk; ++k) {
                Eigen::SelfAdjointEigenSolver<MatXc> es(blocks[m][k]);
                const double l1 = std::max(es.eigenvalues()(prob.n_tx - 1), 0.0);
                out.w[m][k] = std::sqrt(l1) * es.eigenvectors().col(prob.n_tx - 1);
            }
        return out;
    };

    // Full-power rescale is weakly optimal: rate grows along the serving
    // direction and the FIM quadratic grows with any scale-up. Non-serving
    // beams never enter the objective, so among rate-optimal solutions the
    // sensing-maximizing direction (top eigenvector of the per-BS Gram) is
    // a deterministic tie-break that can only lower the achieved trace.
    const auto rescale = [&](BeamformerSet& b) {
        for (int m = 0; m < prob.num_bs; ++m) {
            if (m != prob.serving_bs) {
                Eigen::SelfAdjointEigenSolver<MatXc> es(prob.coeffs.gram[m]);
                VecXc dir = es.eigenvectors().col(prob.n_tx - 1);
                if (es.eigenvalues()(prob.n_tx - 1) <= 0.0) dir = steer_tx(0.0, prob.n_tx);
                const double s = std::sqrt(prob.power_budget[m] / kk);
                for (auto& wk : b.w[m]) wk = s * dir;
                continue;
            }
            const double used = b.power(m);
            if (used > 1e-10 * prob.power_budget[m]) {
                const double s = std::sqrt(prob.power_budget[m] / used);
                for (auto& wk : b.w[m]) wk *= s;
            } else {
                Eigen::SelfAdjointEigenSolver<MatXc> es(prob.coeffs.gram[m]);
                const VecXc dir = es.eigenvectors().col(prob.n_tx - 1);
                const double s = std::sqrt(prob.power_budget[m] / kk);
                for (auto& wk : b.w[m]) wk = s * dir;
            }
        }
    };

    BeamformerSet beams = extract(res.w_blocks);
    rescale(beams);

    bool ok = prob.verify_feasible(beams) && worst_ratio <= prob.sdr.rank_tol;
    if (!ok) {
        Rng rng(0x5d7200f1u);
        double best_rate = prob.verify_feasible(beams) ? prob.predicted_rate(beams) : -1.0;
        bool found = best_rate >= 0.0 && worst_ratio <= prob.sdr.rank_tol;
        for (int trial = 0; trial < prob.sdr.randomization_trials; ++trial) {
            BeamformerSet cand = zero_beams(prob);
            for (int m = 0; m < prob.num_bs; ++m)
                for (int k = 0; k < kk; ++k) {
                    Eigen::SelfAdjointEigenSolver<MatXc> es(res.w_blocks[m][k]);
                    VecXc wk = VecXc::Zero(prob.n_tx);
                    for (int i = 0; i < prob.n_tx; ++i)
                        wk += std::sqrt(std::max(es.eigenvalues()(i), 0.0)) *
                              es.eigenvectors().col(i) * rng.cnormal(0.5);
                    cand.w[m][k] = wk;
                }
            rescale(cand);
            if (!prob.verify_feasible(cand)) continue;
            const double rate = prob.predicted_rate(cand);
            if (rate > best_rate) {
                best_rate = rate;
                beams = cand;
                found = true;
            }
        }
        if (!found) {
            res.diag.status = "rank_recovery_failure";
            res.beams = zero_beams(prob);
            return res;
        }
    }

    res.beams = canonicalize(std::move(beams));
    res.diag.status = "optimal";
    res.diag.objective = prob.predicted_rate(res.beams);
    res.diag.achieved_crlb = prob.crlb_trace(res.beams);
    for (int m = 0; m < prob.num_bs; ++m) res.diag.power_used[m] = res.beams.power(m);
    res.diag.feasible = prob.verify_feasible(res.beams);
    res.diag.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// ----------------------------------------------------------------- penalty

PenaltyTerms penalty_terms(const BeamformerSet& beams, const Eigen::Vector3d& q,
                           const QuadraticCoefficients& coeffs) {
    PenaltyTerms out;
    const Eigen::Vector3d quad = quad_terms(coeffs, beams);
    for (int i = 0; i < 3; ++i) out.f(i) = quad(i) + coeffs.upsilon[i];
    out.kappa = 0.0;
    for (int i = 0; i < 3; ++i)
        out.kappa = std::max(out.kappa, (out.f(i) - q(i)) * (out.f(i) - q(i)));
    return out;
}

namespace {

/// Whether a position-FIM triple admits the (Omega, Psi) certificate with
/// Tr(Omega^{-1}) <= threshold. The best certificate is Omega equal to the
/// Schur complement itself (trace of an inverse is decreasing on the PSD
/// order), so the check reduces to a closed form.
bool certifiable(const BeamProblem& prob, const Eigen::Vector3d& q, double threshold) {
    Mat2 qmat;
    qmat << q(0), q(1), q(1), q(2);
    const Eigen::LDLT<Mat2> vv(prob.coeffs.j_vv);
    if (vv.info() != Eigen::Success || !vv.isPositive()) return false;
    Mat2 s = qmat - prob.coeffs.j_pv * vv.solve(prob.coeffs.j_pv.transpose());
    s = 0.5 * (s + s.transpose()).eval();
    const Eigen::SelfAdjointEigenSolver<Mat2> es(s);
    if (es.eigenvalues()(0) <= 1e-12 * std::abs(s.trace())) return false;
    return 1.0 / es.eigenvalues()(0) + 1.0 / es.eigenvalues()(1) <= threshold;
}

/// A q that is always certifiable with margin: Schur complement pinned to
/// (2 + slack)/threshold times the identity.
Eigen::Vector3d certified_anchor(const BeamProblem& prob, double threshold) {
    const Mat2 target = (2.2 / threshold) * Mat2::Identity() +
                        prob.coeffs.j_pv * prob.coeffs.j_vv.inverse() *
                            prob.coeffs.j_pv.transpose();
    return {target(0, 0), 0.5 * (target(0, 1) + target(1, 0)), target(1, 1)};
}

/// (29): nearest certified q to the current f. When f itself is certified
/// the optimum is q = f exactly; otherwise a small conic projection runs,
/// with a certified bisection toward an interior anchor as the safeguard.
Eigen::Vector3d solve_q_subproblem(const BeamProblem& prob, const Eigen::Vector3d& f,
                                   const conic::Solver& solver) {
    const double threshold = prob.eta * (1.0 - kEtaTighten);
    if (certifiable(prob, f, threshold)) return f;

    conic::Problem p;
    const int t = p.add_free(1);
    const int q = p.add_free(3);
    const int xo = p.add_psd(2);
    const int xl = p.add_psd(4);
    const int xq = p.add_psd(4);
    const int soc = p.add_soc(5);
    const int tpsi = p.add_nonneg(1);

    {
        RowBuilder r{&p, p.add_row(1.0)}; // soc_0 = t + 1
        r.var(soc + 0, 1.0);
        r.var(t, -1.0);
    }
    for (int i = 0; i < 3; ++i) {
        RowBuilder r{&p, p.add_row(-2.0 * f(i))}; // soc_{1+i} = 2(q_i - f_i)
        r.var(soc + 1 + i, 1.0);
        r.var(q + i, -2.0);
    }
    {
        RowBuilder r{&p, p.add_row(-1.0)}; // soc_4 = t - 1
        r.var(soc + 4, 1.0);
        r.var(t, -1.0);
    }

    const int qidx[2][2] = {{0, 1}, {1, 2}};
    for (int j = 0; j < 2; ++j) {
        for (int i = j; i < 2; ++i) {
            RowBuilder r{&p, p.add_row(0.0)};
            r.psd_entry(xq, i, j, 4, 1.0);
            r.var(q + qidx[i][j], -1.0);
            r.psd_entry(xo, i, j, 2, 1.0);
        }
    }
    const Mat2 jpv = prob.coeffs.j_pv, jvv = prob.coeffs.j_vv;
    const auto pin = [&](int i, int j, double rhs) {
        RowBuilder r{&p, p.add_row(rhs)};
        r.psd_entry(xq, i, j, 4, 1.0);
    };
    pin(2, 0, jpv(0, 0));
    pin(3, 0, jpv(0, 1));
    pin(2, 1, jpv(1, 0));
    pin(3, 1, jpv(1, 1));
    pin(2, 2, jvv(0, 0));
    pin(3, 2, jvv(1, 0));
    pin(3, 3, jvv(1, 1));

    for (int j = 0; j < 2; ++j) {
        for (int i = j; i < 2; ++i) {
            RowBuilder r{&p, p.add_row(0.0)};
            r.psd_entry(xl, i, j, 4, 1.0);
            r.psd_entry(xo, i, j, 2, -1.0);
        }
    }
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            RowBuilder r{&p, p.add_row(i == j ? 1.0 : 0.0)};
            r.psd_entry(xl, 2 + i, j, 4, 1.0);
        }
    }
    {
        RowBuilder r{&p, p.add_row(threshold)};
        r.psd_entry(xl, 2, 2, 4, 1.0);
        r.psd_entry(xl, 3, 3, 4, 1.0);
        r.var(tpsi, 1.0);
    }

    p.set_objective(t, 1.0);
    const conic::Solution sol = solver.solve(p);
    if (sol.status == conic::SolveStatus::optimal) {
        Eigen::Vector3d q_sol = sol.x.segment(q, 3);
        // project tiny solver slack back into the certified set
        if (certifiable(prob, q_sol, threshold)) return q_sol;
        const Eigen::Vector3d anchor = certified_anchor(prob, threshold);
        for (int it = 0; it < 60; ++it) {
            q_sol = 0.98 * q_sol + 0.02 * anchor;
            if (certifiable(prob, q_sol, threshold)) return q_sol;
        }
    }

    // certified bisection toward the interior anchor
    const Eigen::Vector3d anchor = certified_anchor(prob, threshold);
    double lo = 0.0, hi = 1.0; // fraction of anchor mixed into f
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (certifiable(prob, f + mid * (anchor - f), threshold))
            hi = mid;
        else
            lo = mid;
    }
    return f + hi * (anchor - f);
}

} // namespace

SurrogateModel::SurrogateModel(const BeamformerSet& anchor, const BeamProblem& prob,
                               const Eigen::Vector3d& q, double rho)
    : prob_(&prob), anchor_(anchor), q_(q), rho_(rho) {
    for (int i = 0; i < 3; ++i) upsilon_(i) = prob.coeffs.upsilon[i];
    q_tilde_ = upsilon_ - q;
    gamma_anchor_.assign(prob.num_bs, 0.0);
    for (int m = 0; m < prob.num_bs; ++m)
        for (int k = 0; k < prob.subcarriers; ++k)
            gamma_anchor_[m] +=
                (anchor_.w[m][k].adjoint() * prob.coeffs.gram[m] * anchor_.w[m][k]).real()(0);
    for (int i = 0; i < 3; ++i) {
        double t = std::abs(q_tilde_(i));
        for (int m = 0; m < prob.num_bs; ++m)
            t += std::abs(signed_coeff(prob.coeffs, m)(i)) * gamma_anchor_[m];
        t_hat_[i] = t;
    }
}

double SurrogateModel::rate_surrogate(const BeamformerSet& beams) const {
    double r = 0.0;
    for (int k = 0; k < prob_->subcarriers; ++k) {
        const VecXc& h = prob_->h[k];
        const cplx hw_anchor = h.dot(anchor_.w[prob_->serving_bs][k]);
        const double lin =
            2.0 * (std::conj(hw_anchor) * h.dot(beams.w[prob_->serving_bs][k])).real() -
            std::norm(hw_anchor);
        r += std::log2(std::max(1.0 + lin / prob_->sigma_c2, 1e-300));
    }
    return r;
}

double SurrogateModel::penalty_surrogate(const BeamformerSet& beams) const {
    std::vector<double> gamma(prob_->num_bs, 0.0);
    std::vector<double> gamma_lin(prob_->num_bs, 0.0);
    for (int m = 0; m < prob_->num_bs; ++m) {
        for (int k = 0; k < prob_->subcarriers; ++k) {
            gamma[m] +=
                (beams.w[m][k].adjoint() * prob_->coeffs.gram[m] * beams.w[m][k]).real()(0);
            gamma_lin[m] += 2.0 * (anchor_.w[m][k].adjoint() * prob_->coeffs.gram[m] *
                                   beams.w[m][k])
                                      .real()(0);
        }
        gamma_lin[m] -= gamma_anchor_[m];
    }
    double total = 0.0;
    for (int i = 0; i < 3; ++i) {
        double u = std::max(q_tilde_(i), 0.0);
        double v = std::max(-q_tilde_(i), 0.0);
        double t_lin = std::abs(q_tilde_(i));
        for (int m = 0; m < prob_->num_bs; ++m) {
            const double c = signed_coeff(prob_->coeffs, m)(i);
            if (c > 0.0)
                u += c * gamma[m];
            else
                v += -c * gamma[m];
            t_lin += std::abs(c) * gamma_lin[m];
        }
        total += 2.0 * u * u + 2.0 * v * v + t_hat_[i] * t_hat_[i] - 2.0 * t_hat_[i] * t_lin;
    }
    return total;
}

double SurrogateModel::value(const BeamformerSet& beams) const {
    return -rate_surrogate(beams) + penalty_surrogate(beams) / (2.0 * rho_);
}

double SurrogateModel::true_value(const BeamformerSet& beams) const {
    const PenaltyTerms terms = penalty_terms(beams, q_, prob_->coeffs);
    double pen = 0.0;
    for (int i = 0; i < 3; ++i) pen += (terms.f(i) - q_(i)) * (terms.f(i) - q_(i));
    return -prob_->predicted_rate(beams) + pen / (2.0 * rho_);
}

BeamformerSet SurrogateModel::minimize() const {
    const int m_bs = prob_->num_bs, kk = prob_->subcarriers;
    const int bdim = 2 * prob_->n_tx;
    const int nblk = m_bs * kk;
    const int nfull = nblk * bdim;

    std::vector<VecX> x(nblk);
    for (int m = 0; m < m_bs; ++m)
        for (int k = 0; k < kk; ++k) x[m * kk + k] = realify(anchor_.w[m][k]);
    for (int m = 0; m < m_bs; ++m) {
        double pow = 0.0;
        for (int k = 0; k < kk; ++k) pow += x[m * kk + k].squaredNorm();
        if (pow >= prob_->power_budget[m] * (1.0 - 1e-12)) {
            const double s = std::sqrt(prob_->power_budget[m] * (1.0 - 1e-9) /
                                       std::max(pow, 1e-300));
            for (int k = 0; k < kk; ++k) x[m * kk + k] *= s;
        }
    }

    std::vector<MatX> gram_real(m_bs);
    for (int m = 0; m < m_bs; ++m) gram_real[m] = embed_hermitian(prob_->coeffs.gram[m]);
    std::vector<VecX> rate_dir(kk);
    std::vector<double> lin_anchor(kk);
    for (int k = 0; k < kk; ++k) {
        const MatXc hk = prob_->h[k] * prob_->h[k].adjoint();
        rate_dir[k] = realify(hk * anchor_.w[prob_->serving_bs][k]);
        lin_anchor[k] = std::norm(prob_->h[k].dot(anchor_.w[prob_->serving_bs][k]));
    }

    // constant gradient of the -2 T_hat T_lin terms (affine in x)
    std::vector<VecX> lin_grad(nblk, VecX::Zero(bdim));
    for (int i = 0; i < 3; ++i)
        for (int m = 0; m < m_bs; ++m) {
            const double ac = std::abs(signed_coeff(prob_->coeffs, m)(i));
            if (ac == 0.0) continue;
            for (int k = 0; k < kk; ++k)
                lin_grad[m * kk + k] -= (t_hat_[i] / rho_) * ac * 2.0 *
                                        (gram_real[m] * realify(anchor_.w[m][k]));
        }

    const auto to_beams = [&](const std::vector<VecX>& pt) {
        BeamformerSet out = zero_beams(*prob_);
        for (int m = 0; m < m_bs; ++m)
            for (int k = 0; k < kk; ++k) out.w[m][k] = complexify_vec(pt[m * kk + k]);
        return out;
    };

    struct Eval {
        double value = std::numeric_limits<double>::infinity();
        std::vector<double> gamma, power, lin;
        Eigen::Vector3d u = Eigen::Vector3d::Zero(), v = Eigen::Vector3d::Zero();
        bool ok = false;
    };
    const auto evaluate = [&](const std::vector<VecX>& pt, double mu) {
        Eval e;
        e.gamma.assign(m_bs, 0.0);
        e.power.assign(m_bs, 0.0);
        e.lin.assign(kk, 0.0);
        for (int m = 0; m < m_bs; ++m)
            for (int k = 0; k < kk; ++k) {
                const VecX& b = pt[m * kk + k];
                e.gamma[m] += b.dot(gram_real[m] * b);
                e.power[m] += b.squaredNorm();
            }
        double val = 0.0;
        for (int b = 0; b < nblk; ++b) val += lin_grad[b].dot(pt[b]);
        for (int k = 0; k < kk; ++k) {
            e.lin[k] = 2.0 * rate_dir[k].dot(pt[prob_->serving_bs * kk + k]) - lin_anchor[k];
            const double arg = 1.0 + e.lin[k] / prob_->sigma_c2;
            if (arg <= 0.0) return e;
            val -= std::log(arg) / kLn2;
        }
        for (int i = 0; i < 3; ++i) {
            e.u(i) = std::max(q_tilde_(i), 0.0);
            e.v(i) = std::max(-q_tilde_(i), 0.0);
            for (int m = 0; m < m_bs; ++m) {
                const double c = signed_coeff(prob_->coeffs, m)(i);
                if (c > 0.0)
                    e.u(i) += c * e.gamma[m];
                else
                    e.v(i) += -c * e.gamma[m];
            }
            val += (e.u(i) * e.u(i) + e.v(i) * e.v(i)) / rho_;
        }
        for (int m = 0; m < m_bs; ++m) {
            const double slack = prob_->power_budget[m] - e.power[m];
            if (slack <= 0.0) return e;
            val -= mu * std::log(slack);
        }
        e.value = val;
        e.ok = true;
        return e;
    };

    const double scale0 = 1.0 + std::abs(evaluate(x, 0.0).value);
    for (double mu = 1e-2 * scale0; mu > 1e-11 * scale0; mu *= 0.1) {
        for (int newton = 0; newton < 40; ++newton) {
            const Eval e = evaluate(x, mu);
            if (!e.ok) break;

            std::vector<VecX> grad(nblk);
            std::vector<MatX> hblk(nblk, MatX::Zero(bdim, bdim));
            for (int b = 0; b < nblk; ++b) grad[b] = lin_grad[b];

            for (int k = 0; k < kk; ++k) {
                const int b = prob_->serving_bs * kk + k;
                const double arg = 1.0 + e.lin[k] / prob_->sigma_c2;
                grad[b] -= (2.0 / (kLn2 * prob_->sigma_c2 * arg)) * rate_dir[k];
                hblk[b] += (4.0 / (kLn2 * prob_->sigma_c2 * prob_->sigma_c2 * arg * arg)) *
                           rate_dir[k] * rate_dir[k].transpose();
            }

            std::vector<VecX> lowrank;
            for (int i = 0; i < 3; ++i) {
                for (int branch = 0; branch < 2; ++branch) {
                    const double s = branch == 0 ? e.u(i) : e.v(i);
                    VecX sg = VecX::Zero(nfull);
                    bool any = false;
                    for (int m = 0; m < m_bs; ++m) {
                        const double c = signed_coeff(prob_->coeffs, m)(i);
                        const double am = branch == 0 ? std::max(c, 0.0) : std::max(-c, 0.0);
                        if (am == 0.0) continue;
                        any = true;
                        for (int k = 0; k < kk; ++k) {
                            const int b = m * kk + k;
                            const VecX gb = 2.0 * am * (gram_real[m] * x[b]);
                            sg.segment(b * bdim, bdim) = gb;
                            grad[b] += (2.0 / rho_) * s * gb;
                            hblk[b] += (4.0 / rho_) * s * am * gram_real[m];
                        }
                    }
                    if (any) lowrank.push_back(std::sqrt(2.0 / rho_) * sg);
                }
            }
            for (int m = 0; m < m_bs; ++m) {
                const double slack = prob_->power_budget[m] - e.power[m];
                VecX pg = VecX::Zero(nfull);
                for (int k = 0; k < kk; ++k) {
                    const int b = m * kk + k;
                    grad[b] += (2.0 * mu / slack) * x[b];
                    hblk[b] += (2.0 * mu / slack) * MatX::Identity(bdim, bdim);
                    pg.segment(b * bdim, bdim) = 2.0 * x[b];
                }
                lowrank.push_back((std::sqrt(mu) / slack) * pg);
            }

            for (int b = 0; b < nblk; ++b)
                hblk[b] += (1e-12 * scale0) * MatX::Identity(bdim, bdim);
            std::vector<Eigen::LLT<MatX>> llts;
            llts.reserve(nblk);
            for (int b = 0; b < nblk; ++b) llts.emplace_back(hblk[b]);
            const auto dinv = [&](const VecX& full) {
                VecX out(nfull);
                for (int b = 0; b < nblk; ++b)
                    out.segment(b * bdim, bdim) = llts[b].solve(full.segment(b * bdim, bdim));
                return out;
            };

            VecX g_full(nfull);
            for (int b = 0; b < nblk; ++b) g_full.segment(b * bdim, bdim) = grad[b];

            const int r = static_cast<int>(lowrank.size());
            MatX dinv_u(nfull, r);
            MatX u_mat(nfull, r);
            for (int j = 0; j < r; ++j) {
                u_mat.col(j) = lowrank[j];
                dinv_u.col(j) = dinv(lowrank[j]);
            }
            const MatX cap = MatX::Identity(r, r) + u_mat.transpose() * dinv_u;
            const VecX dinv_g = dinv(g_full);
            const VecX step =
                -(dinv_g - dinv_u * cap.ldlt().solve(u_mat.transpose() * dinv_g));

            const double decrement = -step.dot(g_full);
            if (!(decrement > 1e-13 * scale0)) break;

            double alpha = 1.0;
            bool accepted = false;
            for (int ls = 0; ls < 50; ++ls) {
                std::vector<VecX> trial = x;
                for (int b = 0; b < nblk; ++b) trial[b] += alpha * step.segment(b * bdim, bdim);
                const Eval te = evaluate(trial, mu);
                if (te.ok && te.value <= e.value - 1e-4 * alpha * decrement) {
                    x = std::move(trial);
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) break;
        }
    }

    return to_beams(x);
}

PenaltyResult solve_penalty(const BeamProblem& prob, const BeamformerSet& init,
                            const conic::Solver& solver) {
    const auto t0 = std::chrono::steady_clock::now();
    PenaltyResult res;
    res.diag.power_used.assign(prob.num_bs, 0.0);

    double upsilon_scale = 1.0;
    for (int i = 0; i < 3; ++i)
        upsilon_scale = std::max(upsilon_scale, std::abs(prob.coeffs.upsilon[i]));
    double rho = prob.penalty.rho0 > 0.0 ? prob.penalty.rho0 : 1e3 * upsilon_scale;

    BeamformerSet w = init;
    Eigen::Vector3d q = Eigen::Vector3d::Zero();
    bool converged = false;
    int outer_used = 0;

    for (int outer = 0; outer < prob.penalty.max_outer; ++outer) {
        outer_used = outer + 1;
        res.inner_objectives.emplace_back();
        double prev_obj = std::numeric_limits<double>::infinity();
        for (int inner = 0; inner < prob.penalty.max_inner; ++inner) {
            const Eigen::Vector3d f = penalty_terms(w, q, prob.coeffs).f;
            q = solve_q_subproblem(prob, f, solver);

            const SurrogateModel model(w, prob, q, rho);
            BeamformerSet w_next = model.minimize();
            if (model.true_value(w_next) >
                model.true_value(w) + 1e-10 * (1.0 + std::abs(prev_obj)))
                w_next = w; // majorization guarantees descent; guard numerics
            w = std::move(w_next);

            const double obj = SurrogateModel(w, prob, q, rho).true_value(w);
            res.inner_objectives.back().push_back(obj);
            if (inner > 0 &&
                std::abs(prev_obj - obj) <= prob.penalty.inner_tol * (1.0 + std::abs(prev_obj)))
                break;
            prev_obj = obj;
        }
        const double kappa = penalty_terms(w, q, prob.coeffs).kappa;
        res.diag.kappa = kappa;
        if (kappa < prob.penalty.kappa_tol) {
            converged = true;
            break;
        }
        rho *= prob.penalty.xi;
    }

    res.beams = canonicalize(std::move(w));
    res.diag.status = converged ? "optimal" : "non_converged";
    res.diag.iterations = outer_used;
    res.diag.objective = prob.predicted_rate(res.beams);
    res.diag.achieved_crlb = prob.crlb_trace(res.beams);
    for (int m = 0; m < prob.num_bs; ++m) res.diag.power_used[m] = res.beams.power(m);
    res.diag.feasible = prob.verify_feasible(res.beams);
    res.diag.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

BeamformerSet nonopt_beams(const std::vector<double>& theta_pred, const ScenarioConfig& cfg) {
    BeamformerSet beams = BeamformerSet::zeros(cfg);
    for (int m = 0; m < cfg.num_bs(); ++m) {
        const double scale = std::sqrt(cfg.power_budget[m] / cfg.subcarriers);
        for (int k = 0; k < cfg.subcarriers; ++k)
            beams.w[m][k] = scale * steer_tx(theta_pred[m], cfg.n_tx);
    }
    return beams;
}

BeamformerSet canonicalize(BeamformerSet beams) {
    for (auto& per_bs : beams.w) {
        for (auto& wk : per_bs) {
            const double norm = wk.norm();
            if (norm <= 0.0) continue;
            for (Eigen::Index i = 0; i < wk.size(); ++i) {
                if (std::abs(wk(i)) > 1e-12 * norm) {
                    const double phase = std::arg(wk(i));
                    if (std::abs(phase) > 1e-14) wk *= std::exp(cplx(0.0, -phase));
                    break;
                }
            }
        }
    }
    return beams;
}

} // namespace isac
