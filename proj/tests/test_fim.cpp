#include <doctest.h>

#include "isac/fim.hpp"
#include "isac/tracker.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

using namespace isac;

namespace {

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

Mat4 random_prior(uint64_t seed) {
    Rng rng(seed);
    Mat4 a;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) a(i, j) = 0.1 * rng.normal();
    Mat4 m = a * a.transpose() + 0.05 * Mat4::Identity();
    return m;
}

/// Generic-product oracle: Re{sum G^H Q^-1 G} + M_pred^-1 from the tracker
/// Jacobians, independent of the closed-form coefficient path.
Mat4 generic_fim(const Vec4& d, const Mat4& m_pred, const ScenarioConfig& cfg,
                 const BeamformerSet& beams) {
    const auto blocks = jacobian(d, cfg, beams);
    Mat4 info = m_pred.inverse();
    for (int m = 0; m < cfg.num_bs(); ++m) {
        const auto& blk = blocks[m];
        const double w_tau =
            1.0 / (cfg.meas_noise[m].sigma_tau * cfg.meas_noise[m].sigma_tau);
        const double w_mu = 1.0 / (cfg.meas_noise[m].sigma_mu * cfg.meas_noise[m].sigma_mu);
        const double w_th = 1.0 / cfg.meas_noise[m].sigma_theta2;
        info += w_tau * blk.dtau * blk.dtau.transpose();
        info += w_mu * blk.dmu * blk.dmu.transpose();
        Mat2 opp;
        opp(0, 0) = blk.do_dpx.squaredNorm();
        opp(1, 1) = blk.do_dpy.squaredNorm();
        opp(0, 1) = opp(1, 0) = blk.do_dpx.dot(blk.do_dpy).real();
        info.topLeftCorner<2, 2>() += w_th * opp;
    }
    return 0.5 * (info + info.transpose());
}

} // namespace

TEST_CASE("prior fim inverts the predictive covariance") {
    Mat4 m = Mat4::Zero();
    m.diagonal() << 2.0, 0.5, 4.0, 0.25;
    const Mat4 j = prior_fim(m);
    CHECK(j(0, 0) == doctest::Approx(0.5));
    CHECK(j(1, 1) == doctest::Approx(2.0));
    CHECK(j(2, 2) == doctest::Approx(0.25));
    CHECK(j(3, 3) == doctest::Approx(4.0));

    const Mat4 full = random_prior(3);
    CHECK((full * prior_fim(full) - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("coefficient structure") {
    const ScenarioConfig cfg = desk_scale_scenario();

    SUBCASE("zero predicted velocity removes doppler terms") {
        Vec4 d;
        d << 30.0, 12.0, 0.0, 0.0;
        const auto co = coefficients(d, random_prior(5), cfg);
        for (int m = 0; m < cfg.num_bs(); ++m) {
            const Vec2 ell = Vec2(d(0), d(1)) - cfg.bs_positions[m];
            const double r2 = ell.squaredNorm();
            const double w_tau =
                1.0 / (cfg.meas_noise[m].sigma_tau * cfg.meas_noise[m].sigma_tau);
            const double expect = 4.0 * w_tau * ell(0) * ell(0) / (9e16 * r2);
            CHECK(co.a_bar[0][m] == doctest::Approx(expect).epsilon(1e-12));
        }
    }

    SUBCASE("gram matrices are hermitian psd") {
        Vec4 d;
        d << 25.0, 18.0, 10.0, -5.0;
        const auto co = coefficients(d, random_prior(7), cfg);
        for (int m = 0; m < cfg.num_bs(); ++m) {
            for (int i : {1, 3}) {
                const MatXc at = co.a_tilde(m, i);
                CHECK((at - at.adjoint()).norm() < 1e-12 * (1.0 + at.norm()));
                Eigen::SelfAdjointEigenSolver<MatXc> es(at);
                CHECK(es.eigenvalues()(0) >= -1e-12 * (1.0 + at.norm()));
            }
            const MatXc a2 = co.a_tilde(m, 2);
            CHECK((a2 - a2.adjoint()).norm() < 1e-12 * (1.0 + a2.norm()));
        }
    }

    SUBCASE("target level with a BS zeroes the cross constant") {
        Vec4 d;
        d << 30.0, 0.0, 10.0, 2.0; // same height as BS 1 and 2
        const auto co = coefficients(d, random_prior(9), cfg);
        CHECK(co.a_bar[1][0] == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(co.a_bar[1][1] == doctest::Approx(0.0).epsilon(1e-15));
    }
}

TEST_CASE("closed-form fim equals the generic jacobian product") {
    const ScenarioConfig cfg = desk_scale_scenario();
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 8; ++trial) {
        Vec4 d;
        d << -25.0 + 55.0 * rng.uniform(), 4.0 + 26.0 * rng.uniform(),
            -15.0 + 30.0 * rng.uniform(), -15.0 + 30.0 * rng.uniform();
        const Mat4 m_pred = random_prior(200 + trial);
        const BeamformerSet beams = random_beams(cfg, 300 + trial);

        const auto co = coefficients(d, m_pred, cfg);
        const Mat4 closed = fim_blocks(co, beams).assembled();
        const Mat4 generic = generic_fim(d, m_pred, cfg, beams);
        const double err = (closed - generic).cwiseAbs().maxCoeff() /
                           generic.cwiseAbs().maxCoeff();
        worst = std::max(worst, err);
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("fim quadratic homogeneity and zero-beam collapse") {
    const ScenarioConfig cfg = desk_scale_scenario();
    Vec4 d;
    d << 32.0, 9.0, 14.0, -6.0;
    const Mat4 m_pred = random_prior(11);
    const auto co = coefficients(d, m_pred, cfg);

    const FimBlocks zero = fim_blocks(co, BeamformerSet::zeros(cfg));
    CHECK(zero.j_pp(0, 0) == doctest::Approx(co.upsilon[0]));
    CHECK(zero.j_pp(0, 1) == doctest::Approx(co.upsilon[1]));
    CHECK(zero.j_pp(1, 1) == doctest::Approx(co.upsilon[2]));

    BeamformerSet beams = random_beams(cfg, 13);
    const Eigen::Vector3d q1 = quad_terms(co, beams);
    for (auto& per_bs : beams.w)
        for (auto& wk : per_bs) wk *= std::sqrt(2.0);
    const Eigen::Vector3d q2 = quad_terms(co, beams);
    CHECK((q2 - 2.0 * q1).cwiseAbs().maxCoeff() < 1e-10 * q1.cwiseAbs().maxCoeff());
}

TEST_CASE("position pc-crlb") {
    const ScenarioConfig cfg = desk_scale_scenario();
    Vec4 d;
    d << 28.0, 16.0, 11.0, 3.0;
    const auto co = coefficients(d, random_prior(17), cfg);
    FimBlocks blocks = fim_blocks(co, random_beams(cfg, 19));

    SUBCASE("block-diagonal case inverts j_pp directly") {
        FimBlocks diag = blocks;
        diag.j_pv.setZero();
        const PcCrlb c = pc_crlb_position(diag);
        CHECK((c.matrix - diag.j_pp.inverse()).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("trace equals the reciprocal eigenvalue sum of the schur complement") {
        const Mat2 s =
            blocks.j_pp - blocks.j_pv * blocks.j_vv.inverse() * blocks.j_pv.transpose();
        const Eigen::SelfAdjointEigenSolver<Mat2> es(s);
        const double via_eigs = 1.0 / es.eigenvalues()(0) + 1.0 / es.eigenvalues()(1);
        const PcCrlb c = pc_crlb_position(blocks);
        CHECK(std::abs(c.trace - via_eigs) < 1e-12 * via_eigs);

        // Schur-complement LMI holds with zero minimum eigenvalue at Omega = S
        Mat4 lmi;
        lmi.topLeftCorner<2, 2>() = blocks.j_pp - s;
        lmi.topRightCorner<2, 2>() = blocks.j_pv;
        lmi.bottomLeftCorner<2, 2>() = blocks.j_pv.transpose();
        lmi.bottomRightCorner<2, 2>() = blocks.j_vv;
        const Eigen::SelfAdjointEigenSolver<Mat4> les(lmi);
        CHECK(std::abs(les.eigenvalues()(0)) < 1e-9 * lmi.trace());
    }

    SUBCASE("adding a BS never increases the bound") {
        ScenarioConfig one = cfg;
        one.bs_positions = {cfg.bs_positions[2]};
        one.carrier_freqs = {cfg.carrier_freqs[2]};
        one.power_budget = {cfg.power_budget[2]};
        one.meas_noise = {cfg.meas_noise[2]};
        one.serving_bs = 0;

        const Mat4 m_pred = random_prior(23);
        BeamformerSet beams3 = random_beams(cfg, 29);
        BeamformerSet beams1;
        beams1.w = {beams3.w[2]};

        const double tr3 = pc_crlb_trace(d, m_pred, cfg, beams3);
        const double tr1 = pc_crlb_trace(d, m_pred, one, beams1);
        CHECK(tr3 <= tr1 * (1.0 + 1e-12));
    }
}

TEST_CASE("pipeline covariance keeps the pc-crlb computable") {
    const ScenarioConfig cfg = desk_scale_scenario();
    Vec4 d = cfg.initial_state;
    Mat4 m_pred = Mat4::Zero();
    m_pred.diagonal() << 0.25, 0.25, 0.25, 0.25;
    const Mat4 j = prior_fim(m_pred);
    const Eigen::SelfAdjointEigenSolver<Mat4> es(j);
    CHECK(es.eigenvalues()(0) > 0.0);
    CHECK(pc_crlb_trace(d, m_pred, cfg, random_beams(cfg, 31)) > 0.0);
}
