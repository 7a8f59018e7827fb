#include "isac/fim.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace isac {

Mat4 prior_fim(const Mat4& m_pred) {
    const Eigen::LDLT<Mat4> ldlt(m_pred);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw std::runtime_error("prior FIM: singular predictive covariance");
    Mat4 inv = ldlt.solve(Mat4::Identity());
    return 0.5 * (inv + inv.transpose());
}

QuadraticCoefficients coefficients(const Vec4& d_pred, const Mat4& m_pred,
                                   const ScenarioConfig& cfg) {
    QuadraticCoefficients co;
    co.d_pred = d_pred;
    co.num_bs = cfg.num_bs();
    co.symbols = cfg.symbols_per_block;

    const ChannelSnapshot snap = snapshot(TargetState::from_stacked(d_pred), cfg);
    const Vec2 v(d_pred(2), d_pred(3));
    const Mat4 prior = prior_fim(m_pred);

    co.gram.resize(co.num_bs);
    co.quad_gain.resize(co.num_bs);
    co.sigma_theta2.resize(co.num_bs);
    co.s_dir.resize(co.num_bs);
    for (int i = 0; i < 3; ++i) co.a_bar[i].resize(co.num_bs);

    for (int m = 0; m < co.num_bs; ++m) {
        const Vec2 ell = TargetState::from_stacked(d_pred).position - cfg.bs_positions[m];
        const double r = snap.range[m];
        const double lx = ell(0), ly = ell(1);
        const double psi = v(0) * ly - v(1) * lx;
        const double fm = cfg.carrier_freqs[m];
        const double c2 = cfg.c * cfg.c;
        const double r2 = r * r;
        const double w_tau = 1.0 / (cfg.meas_noise[m].sigma_tau * cfg.meas_noise[m].sigma_tau);
        const double w_mu = 1.0 / (cfg.meas_noise[m].sigma_mu * cfg.meas_noise[m].sigma_mu);

        const MatXc a_dot = steering_outer_derivative(snap.angle[m], cfg.n_rx, cfg.n_tx);
        co.gram[m] = a_dot.adjoint() * a_dot;
        co.sigma_theta2[m] = cfg.meas_noise[m].sigma_theta2;
        co.quad_gain[m] = (1.0 / cfg.meas_noise[m].sigma_theta2) * cfg.symbols_per_block *
                          std::norm(snap.reflect_coef[m]) * cfg.mf_gain * cfg.mf_gain /
                          (r2 * r2);
        co.s_dir[m] << ly, -lx;

        const double mu_common = 4.0 * fm * fm * w_mu * psi * psi / (c2 * r2 * r2 * r2);
        co.a_bar[0][m] = 4.0 * w_tau * lx * lx / (c2 * r2) + mu_common * ly * ly;
        co.a_bar[1][m] = 4.0 * w_tau * lx * ly / (c2 * r2) - mu_common * lx * ly;
        co.a_bar[2][m] = 4.0 * w_tau * ly * ly / (c2 * r2) + mu_common * lx * lx;

        const double pv_common = 4.0 * fm * fm * w_mu * psi / (c2 * r2 * r2);
        co.j_pv(0, 0) += pv_common * lx * ly;
        co.j_pv(0, 1) += pv_common * ly * ly;
        co.j_pv(1, 0) += -pv_common * lx * lx;
        co.j_pv(1, 1) += -pv_common * lx * ly;

        const double vv_common = 4.0 * fm * fm * w_mu / (c2 * r2);
        co.j_vv(0, 0) += vv_common * lx * lx;
        co.j_vv(0, 1) += vv_common * lx * ly;
        co.j_vv(1, 0) += vv_common * lx * ly;
        co.j_vv(1, 1) += vv_common * ly * ly;
    }

    co.upsilon[0] = prior(0, 0);
    co.upsilon[1] = prior(0, 1);
    co.upsilon[2] = prior(1, 1);
    for (int m = 0; m < co.num_bs; ++m)
        for (int i = 0; i < 3; ++i) co.upsilon[i] += co.a_bar[i][m];

    co.j_pv += prior.topRightCorner<2, 2>();
    co.j_vv += prior.bottomRightCorner<2, 2>();
    return co;
}

Eigen::Vector3d quad_terms(const QuadraticCoefficients& coeffs, const BeamformerSet& beams) {
    Eigen::Vector3d q = Eigen::Vector3d::Zero();
    for (int m = 0; m < coeffs.num_bs; ++m) {
        double gamma = 0.0;
        for (const auto& wk : beams.w[m])
            gamma += (wk.adjoint() * coeffs.gram[m] * wk).real()(0);
        gamma *= coeffs.quad_gain[m];
        const Vec2 s = coeffs.s_dir[m];
        q(0) += gamma * s(0) * s(0);
        q(1) += gamma * s(0) * s(1);
        q(2) += gamma * s(1) * s(1);
    }
    return q;
}

FimBlocks fim_blocks(const QuadraticCoefficients& coeffs, const BeamformerSet& beams) {
    const Eigen::Vector3d q = quad_terms(coeffs, beams);
    FimBlocks blk;
    blk.j_pp << q(0) + coeffs.upsilon[0], q(1) + coeffs.upsilon[1], q(1) + coeffs.upsilon[1],
        q(2) + coeffs.upsilon[2];
    blk.j_pv = coeffs.j_pv;
    blk.j_vv = coeffs.j_vv;
    return blk;
}

PcCrlb pc_crlb_position(const FimBlocks& blocks) {
    const Eigen::LDLT<Mat2> vv(blocks.j_vv);
    if (vv.info() != Eigen::Success || !vv.isPositive())
        throw std::runtime_error("PC-CRLB: velocity information block not invertible");
    Mat2 s = blocks.j_pp - blocks.j_pv * vv.solve(blocks.j_pv.transpose());
    s = 0.5 * (s + s.transpose()).eval();

    const Eigen::SelfAdjointEigenSolver<Mat2> es(s);
    if (es.eigenvalues()(0) <= 1e-12 * s.trace())
        throw std::runtime_error("PC-CRLB: position unidentifiable (Schur complement not PD)");

    PcCrlb out;
    out.matrix = s.inverse();
    out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
    out.trace = out.matrix.trace();
    return out;
}

double pc_crlb_trace(const Vec4& d_pred, const Mat4& m_pred, const ScenarioConfig& cfg,
                     const BeamformerSet& beams) {
    const auto co = coefficients(d_pred, m_pred, cfg);
    return pc_crlb_position(fim_blocks(co, beams)).trace;
}

} // namespace isac
