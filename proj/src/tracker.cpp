#include "isac/tracker.hpp"

#include <cmath>
#include <stdexcept>

namespace isac {

namespace {
constexpr uint64_t kInitStream = 0x494e4954ull;
}

MatX JacobianBlock::realified() const {
    const Eigen::Index n = do_dpx.size();
    MatX g(2 + 2 * n, 4);
    g.row(0) = dtau.transpose();
    g.row(1) = dmu.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
        g.row(2 + 2 * i) << do_dpx(i).real(), do_dpy(i).real(), 0.0, 0.0;
        g.row(3 + 2 * i) << do_dpx(i).imag(), do_dpy(i).imag(), 0.0, 0.0;
    }
    return g;
}

TrackState predict(const TrackState& track, const MotionModel& model) {
    TrackState out;
    out.estimate = model.apply(track.estimate);
    Mat4 m = model.transition * track.covariance * model.transition.transpose() + model.process_cov;
    out.covariance = 0.5 * (m + m.transpose());
    return out;
}

std::vector<JacobianBlock> jacobian(const Vec4& d, const ScenarioConfig& cfg,
                                    const BeamformerSet& beams,
                                    const std::vector<cplx>& alphas) {
    const int K = cfg.subcarriers, L = cfg.symbols_per_block, Nr = cfg.n_rx;
    const Vec2 p(d(0), d(1));
    const Vec2 v(d(2), d(3));

    std::vector<JacobianBlock> blocks;
    blocks.reserve(cfg.num_bs());
    for (int m = 0; m < cfg.num_bs(); ++m) {
        const Vec2 ell = p - cfg.bs_positions[m];
        const double r = ell.norm();
        if (r <= 0.0) throw std::domain_error("jacobian: degenerate geometry");
        const double lx = ell(0), ly = ell(1);
        const double psi = v(0) * ly - v(1) * lx;
        const double fm = cfg.carrier_freqs[m];
        const double r3 = r * r * r;

        JacobianBlock blk;
        blk.bs_index = m;
        blk.dtau << 2.0 * lx / (cfg.c * r), 2.0 * ly / (cfg.c * r), 0.0, 0.0;
        blk.dmu << 2.0 * fm * ly * psi / (cfg.c * r3), -2.0 * fm * lx * psi / (cfg.c * r3),
            2.0 * fm * lx / (cfg.c * r), 2.0 * fm * ly / (cfg.c * r);

        // Matched-filter rows differentiated through cos(theta): the per-BS
        // outer product depends on the position only via cos(theta), so
        // d o / d p = (dA/dcos) w * d cos/d p with d cos/d p =
        // (ly^2, -lx ly) / r^3. On ly >= 0 this coincides with the
        // Adot-times-angle-gradient cross pairing; unlike that form it stays
        // valid when the target crosses a BS axis (sin theta = |ly| / r).
        const double theta = std::acos(std::clamp(lx / r, -1.0, 1.0));
        const VecXc ar = steer_rx(theta, Nr);
        const VecXc at = steer_tx(theta, cfg.n_tx);
        VecXc dr(Nr), dt(cfg.n_tx); // d a / d cos(theta)
        for (int i = 0; i < Nr; ++i) dr(i) = cplx(0.0, -i * kPi) * ar(i);
        for (int i = 0; i < cfg.n_tx; ++i) dt(i) = cplx(0.0, -i * kPi) * at(i);
        const MatXc a_dcos = dr * at.adjoint() + ar * dt.adjoint();

        const cplx coef = alphas[m] * cfg.mf_gain / r3;
        const cplx cx = coef * ly * ly;
        const cplx cy = coef * (-lx * ly);

        blk.do_dpx.resize(static_cast<Eigen::Index>(K) * L * Nr);
        blk.do_dpy.resize(static_cast<Eigen::Index>(K) * L * Nr);
        for (int k = 0; k < K; ++k) {
            const VecXc adw = a_dcos * beams.w[m][k];
            for (int l = 0; l < L; ++l) {
                const Eigen::Index base = (static_cast<Eigen::Index>(k) * L + l) * Nr;
                blk.do_dpx.segment(base, Nr) = cx * adw;
                blk.do_dpy.segment(base, Nr) = cy * adw;
            }
        }
        blocks.push_back(std::move(blk));
    }
    return blocks;
}

std::vector<JacobianBlock> jacobian(const Vec4& d, const ScenarioConfig& cfg,
                                    const BeamformerSet& beams) {
    const ChannelSnapshot snap = snapshot(TargetState::from_stacked(d), cfg);
    return jacobian(d, cfg, beams, snap.reflect_coef);
}

TrackState update(const TrackState& track_pred, const std::vector<MeasurementBundle>& bundles,
                  const ScenarioConfig& cfg, const BeamformerSet& beams) {
    const Vec4 d = track_pred.estimate;
    const ChannelSnapshot snap = snapshot(TargetState::from_stacked(d), cfg);

    std::vector<cplx> alphas(cfg.num_bs());
    for (const auto& b : bundles) alphas[b.bs_index] = b.alpha;
    const auto blocks = jacobian(d, cfg, beams, alphas);

    Mat4 info = track_pred.covariance.inverse();
    Vec4 rhs = Vec4::Zero();
    for (const auto& b : bundles) {
        const auto& blk = blocks[b.bs_index];
        const double w_tau = 1.0 / (b.sigma_tau * b.sigma_tau);
        const double w_mu = 1.0 / (b.sigma_mu * b.sigma_mu);
        const double w_th = 1.0 / b.sigma_theta2;

        info += w_tau * blk.dtau * blk.dtau.transpose();
        info += w_mu * blk.dmu * blk.dmu.transpose();

        // matched-filter rows: real parts of the Hermitian pairings
        Mat2 opp;
        opp(0, 0) = blk.do_dpx.squaredNorm();
        opp(1, 1) = blk.do_dpy.squaredNorm();
        opp(0, 1) = opp(1, 0) = blk.do_dpx.dot(blk.do_dpy).real();
        info.topLeftCorner<2, 2>() += w_th * opp;

        const int m = b.bs_index;
        const double r_tau = b.tau_hat - snap.tau[m];
        const double r_mu = b.mu_hat - snap.doppler[m];
        const VecXc r_y =
            b.y_tilde - stacked_measurement_model(cfg, b.alpha, snap.angle[m], beams.w[m]);

        rhs += w_tau * r_tau * blk.dtau;
        rhs += w_mu * r_mu * blk.dmu;
        rhs(0) += w_th * blk.do_dpx.dot(r_y).real();
        rhs(1) += w_th * blk.do_dpy.dot(r_y).real();
    }

    info = 0.5 * (info + info.transpose()).eval();
    const Eigen::LDLT<Mat4> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw std::runtime_error("EKF update: numerically degenerate information matrix");

    TrackState out;
    out.covariance = ldlt.solve(Mat4::Identity());
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    out.estimate = d + ldlt.solve(rhs);
    return out;
}

TrackState initialize(const ScenarioConfig& cfg, const TargetState& true_state, uint64_t seed) {
    Rng rng(Rng::derive(seed, kInitStream));
    TrackState t;
    t.estimate = true_state.stacked();
    for (int i = 0; i < 2; ++i) t.estimate(i) += rng.normal(0.0, cfg.init_pos_std);
    for (int i = 2; i < 4; ++i) t.estimate(i) += rng.normal(0.0, cfg.init_vel_std);
    t.covariance = Mat4::Zero();
    t.covariance(0, 0) = t.covariance(1, 1) = cfg.init_pos_std * cfg.init_pos_std;
    t.covariance(2, 2) = t.covariance(3, 3) = cfg.init_vel_std * cfg.init_vel_std;
    if (cfg.init_pos_std == 0.0) t.covariance(0, 0) = t.covariance(1, 1) = 1e-12;
    if (cfg.init_vel_std == 0.0) t.covariance(2, 2) = t.covariance(3, 3) = 1e-12;
    return t;
}

} // namespace isac
