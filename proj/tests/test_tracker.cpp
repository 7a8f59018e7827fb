#include <doctest.h>

#include "isac/tracker.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

using namespace isac;

namespace {

ScenarioConfig tracker_config() {
    ScenarioConfig cfg = desk_scale_scenario();
    return cfg;
}

BeamformerSet random_beams(const ScenarioConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    BeamformerSet beams = BeamformerSet::zeros(cfg);
    for (int m = 0; m < cfg.num_bs(); ++m) {
        double power = 0.0;
        for (int k = 0; k < cfg.subcarriers; ++k) {
            for (int i = 0; i < cfg.n_tx; ++i)
                beams.w[m][k](i) = cplx(rng.normal(), rng.normal());
            power += beams.w[m][k].squaredNorm();
        }
        const double scale = std::sqrt(cfg.power_budget[m] / power);
        for (auto& wk : beams.w[m]) wk *= scale;
    }
    return beams;
}

/// Stacked measurement map g(d) for one BS with fixed reflection
/// coefficients; the finite-difference oracle differentiates this.
VecX measurement_map(const Vec4& d, const ScenarioConfig& cfg, const BeamformerSet& beams,
                     const std::vector<cplx>& alphas, int m) {
    const ChannelSnapshot snap = snapshot(TargetState::from_stacked(d), cfg);
    const VecXc o = stacked_measurement_model(cfg, alphas[m], snap.angle[m], beams.w[m]);
    VecX out(2 + 2 * o.size());
    out(0) = snap.tau[m];
    out(1) = snap.doppler[m];
    for (Eigen::Index i = 0; i < o.size(); ++i) {
        out(2 + 2 * i) = o(i).real();
        out(3 + 2 * i) = o(i).imag();
    }
    return out;
}

} // namespace

TEST_CASE("prediction step") {
    const ScenarioConfig cfg = tracker_config();
    MotionModel model = make_motion_model(cfg);

    SUBCASE("mean follows the constant-velocity model") {
        model.process_cov.setZero();
        TrackState t;
        t.estimate << 40.0, 0.0, 20.0, 0.0;
        t.covariance.setZero();
        const TrackState pred = predict(t, model);
        CHECK(pred.estimate(0) == doctest::Approx(40.4).epsilon(1e-15));
        CHECK(pred.estimate(1) == 0.0);
        CHECK(pred.estimate(2) == 20.0);
        CHECK(pred.estimate(3) == 0.0);
    }

    SUBCASE("process noise adds on a zero covariance") {
        TrackState t;
        t.covariance.setZero();
        const TrackState pred = predict(t, model);
        CHECK((pred.covariance - model.process_cov).norm() == doctest::Approx(0.0));
    }

    SUBCASE("psd preserved") {
        Rng rng(3);
        Mat4 a;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) a(i, j) = rng.normal();
        TrackState t;
        t.covariance = a * a.transpose();
        const TrackState pred = predict(t, model);
        const Eigen::SelfAdjointEigenSolver<Mat4> es(pred.covariance);
        CHECK(es.eigenvalues()(0) >= -1e-12);
    }
}

TEST_CASE("jacobian matches central finite differences") {
    const ScenarioConfig cfg = tracker_config();
    const BeamformerSet beams = random_beams(cfg, 17);
    Rng rng(29);

    double worst = 0.0;
    for (int trial = 0; trial < 6; ++trial) {
        Vec4 d;
        d << -20.0 + 45.0 * rng.uniform(), 5.0 + 25.0 * rng.uniform(),
            -10.0 + 20.0 * rng.uniform(), -10.0 + 20.0 * rng.uniform();
        const ChannelSnapshot snap = snapshot(TargetState::from_stacked(d), cfg);
        const auto blocks = jacobian(d, cfg, beams, snap.reflect_coef);

        const double h = 1e-4;
        for (int m = 0; m < cfg.num_bs(); ++m) {
            const MatX g = blocks[m].realified();
            MatX fd(g.rows(), 4);
            for (int col = 0; col < 4; ++col) {
                Vec4 dp = d, dm = d;
                dp(col) += h;
                dm(col) -= h;
                fd.col(col) = (measurement_map(dp, cfg, beams, snap.reflect_coef, m) -
                               measurement_map(dm, cfg, beams, snap.reflect_coef, m)) /
                              (2.0 * h);
            }
            for (int r = 0; r < g.rows(); ++r) {
                const double row_scale = std::max(fd.row(r).cwiseAbs().maxCoeff(), 1e-300);
                for (int col = 0; col < 4; ++col) {
                    const double err = std::abs(g(r, col) - fd(r, col)) / row_scale;
                    worst = std::max(worst, err);
                }
            }
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("jacobian structural zeros") {
    const ScenarioConfig cfg = tracker_config();

    SUBCASE("zero velocity kills the doppler position rows") {
        Vec4 d;
        d << 25.0, 14.0, 0.0, 0.0;
        const auto blocks = jacobian(d, cfg, random_beams(cfg, 5));
        for (const auto& blk : blocks) {
            CHECK(blk.dmu(0) == 0.0);
            CHECK(blk.dmu(1) == 0.0);
        }
    }

    SUBCASE("zero beams kill the matched-filter rows") {
        Vec4 d;
        d << 25.0, 14.0, 8.0, -2.0;
        const auto blocks = jacobian(d, cfg, BeamformerSet::zeros(cfg));
        for (const auto& blk : blocks) {
            CHECK(blk.do_dpx.norm() == 0.0);
            CHECK(blk.do_dpy.norm() == 0.0);
        }
    }
}

TEST_CASE("information-form update equals the textbook gain form") {
    ScenarioConfig cfg = tracker_config();
    cfg.subcarriers = 2;
    cfg.symbols_per_block = 2;
    cfg.n_rx = 2;
    const BeamformerSet beams = random_beams(cfg, 31);

    const TargetState truth{{36.0, 8.0}, {18.0, -2.0}};
    const auto bundles = simulate_measurements(cfg, truth, beams, 77);

    TrackState pred;
    pred.estimate << 35.7, 8.4, 17.5, -1.4;
    pred.covariance = Mat4::Zero();
    pred.covariance.diagonal() << 0.25, 0.25, 0.25, 0.25;

    const TrackState via_info = update(pred, bundles, cfg, beams);

    // literal five-step oracle on the realified stacked model
    const ChannelSnapshot snap = snapshot(TargetState::from_stacked(pred.estimate), cfg);
    std::vector<cplx> alphas(cfg.num_bs());
    for (const auto& b : bundles) alphas[b.bs_index] = b.alpha;
    const auto blocks = jacobian(pred.estimate, cfg, beams, alphas);

    const int rows_per = 2 + 2 * cfg.subcarriers * cfg.symbols_per_block * cfg.n_rx;
    const int rows = rows_per * cfg.num_bs();
    MatX g(rows, 4);
    VecX innov(rows);
    VecX qdiag(rows);
    for (int m = 0; m < cfg.num_bs(); ++m) {
        g.middleRows(m * rows_per, rows_per) = blocks[m].realified();
        const auto& b = bundles[m];
        innov(m * rows_per + 0) = b.tau_hat - snap.tau[m];
        innov(m * rows_per + 1) = b.mu_hat - snap.doppler[m];
        const VecXc resid =
            b.y_tilde - stacked_measurement_model(cfg, b.alpha, snap.angle[m], beams.w[m]);
        for (Eigen::Index i = 0; i < resid.size(); ++i) {
            innov(m * rows_per + 2 + 2 * i) = resid(i).real();
            innov(m * rows_per + 3 + 2 * i) = resid(i).imag();
        }
        qdiag(m * rows_per + 0) = b.sigma_tau * b.sigma_tau;
        qdiag(m * rows_per + 1) = b.sigma_mu * b.sigma_mu;
        qdiag.segment(m * rows_per + 2, rows_per - 2).setConstant(b.sigma_theta2);
    }
    const MatX s = g * pred.covariance * g.transpose() + MatX(qdiag.asDiagonal());
    const MatX gain = pred.covariance * g.transpose() * s.llt().solve(MatX::Identity(rows, rows));
    const Vec4 d_gain = pred.estimate + gain * innov;
    const Mat4 m_gain = (Mat4::Identity() - gain * g) * pred.covariance;

    CHECK((via_info.estimate - d_gain).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((via_info.covariance - m_gain).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("uninformative measurements leave the prediction unchanged") {
    const ScenarioConfig cfg = tracker_config();
    const BeamformerSet beams = random_beams(cfg, 41);
    const TargetState truth{{36.0, 8.0}, {18.0, -2.0}};
    auto bundles = simulate_measurements(cfg, truth, beams, 13);
    for (auto& b : bundles) {
        b.sigma_tau = 1e12;
        b.sigma_mu = 1e15;
        b.sigma_theta2 = 1e12;
    }

    TrackState pred;
    pred.estimate << 35.0, 9.0, 17.0, -1.0;
    pred.covariance = 0.3 * Mat4::Identity();
    const TrackState post = update(pred, bundles, cfg, beams);
    CHECK((post.estimate - pred.estimate).norm() < 1e-6);
    CHECK((post.covariance - pred.covariance).norm() / pred.covariance.norm() < 1e-6);
}

TEST_CASE("noiseless updates contract toward a static target") {
    ScenarioConfig cfg = tracker_config();
    const TargetState truth{{20.0, 15.0}, {0.0, 0.0}};
    const ChannelSnapshot snap = snapshot(truth, cfg);
    BeamformerSet beams = BeamformerSet::zeros(cfg);
    for (int m = 0; m < cfg.num_bs(); ++m)
        for (int k = 0; k < cfg.subcarriers; ++k)
            beams.w[m][k] = std::sqrt(cfg.power_budget[m] / cfg.subcarriers) *
                            steer_tx(snap.angle[m], cfg.n_tx);

    // zero noise draws, filter weighted with the configured (finite) sigmas
    ScenarioConfig quiet = cfg;
    for (auto& mn : quiet.meas_noise) {
        mn.sigma_tau = 1e-30;
        mn.sigma_mu = 1e-30;
        mn.sigma_theta2 = 1e-60;
    }
    const MotionModel model = make_motion_model(cfg);

    TrackState track;
    track.estimate << 20.4, 14.6, 0.15, -0.2;
    track.covariance = 0.25 * Mat4::Identity();

    double prev = (track.estimate.head<2>() - truth.position).norm();
    for (int it = 0; it < 10; ++it) {
        auto bundles = simulate_measurements(quiet, truth, beams, 0);
        for (size_t m = 0; m < bundles.size(); ++m) {
            bundles[m].sigma_tau = cfg.meas_noise[m].sigma_tau;
            bundles[m].sigma_mu = cfg.meas_noise[m].sigma_mu;
            bundles[m].sigma_theta2 = cfg.meas_noise[m].sigma_theta2;
        }
        track = update(track, bundles, cfg, beams);
        const double err = (track.estimate.head<2>() - truth.position).norm();
        // strictly decreasing until the linearization floor
        if (prev > 1e-4) CHECK(err < prev);
        prev = err;
        track = predict(track, model);
    }
    CHECK(prev < 5e-3);
}

TEST_CASE("initialization proxy") {
    const ScenarioConfig cfg = tracker_config();
    const TargetState truth{{40.0, 0.0}, {20.0, 0.0}};

    SUBCASE("zero perturbation returns the true state") {
        ScenarioConfig exact = cfg;
        exact.init_pos_std = 0.0;
        exact.init_vel_std = 0.0;
        const TrackState t = initialize(exact, truth, 5);
        CHECK((t.estimate - truth.stacked()).norm() == 0.0);
    }

    SUBCASE("deterministic and covariance diagonal") {
        const TrackState a = initialize(cfg, truth, 5);
        const TrackState b = initialize(cfg, truth, 5);
        CHECK((a.estimate - b.estimate).norm() == 0.0);
        CHECK(a.covariance(0, 0) == doctest::Approx(cfg.init_pos_std * cfg.init_pos_std));
        CHECK(a.covariance(3, 3) == doctest::Approx(cfg.init_vel_std * cfg.init_vel_std));
        CHECK(a.covariance(0, 1) == 0.0);
    }
}
