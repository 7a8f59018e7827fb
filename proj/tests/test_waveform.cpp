#include <doctest.h>

#include "isac/waveform.hpp"

#include <cmath>

using namespace isac;

namespace {

BeamformerSet aligned_beams(const ScenarioConfig& cfg, const ChannelSnapshot& snap) {
    BeamformerSet beams = BeamformerSet::zeros(cfg);
    for (int m = 0; m < cfg.num_bs(); ++m) {
        const double scale = std::sqrt(cfg.power_budget[m] / cfg.subcarriers);
        for (int k = 0; k < cfg.subcarriers; ++k)
            beams.w[m][k] = scale * steer_tx(snap.angle[m], cfg.n_tx);
    }
    return beams;
}

} // namespace

TEST_CASE("steering vectors at reference angles") {
    const VecXc broadside = steer_tx(kPi / 2.0, 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(broadside(i).real() == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(broadside(i).imag() == doctest::Approx(0.0).epsilon(1e-12));
    }
    const VecXc endfire = steer_tx(0.0, 4);
    for (int i = 0; i < 4; ++i) {
        const double expect = (i % 2 == 0) ? 0.5 : -0.5;
        CHECK(endfire(i).real() == doctest::Approx(expect).epsilon(1e-9));
        CHECK(std::abs(endfire(i).imag()) < 1e-9);
    }
    for (double theta : {0.1, 0.7, 1.3, 2.9})
        CHECK(steer_tx(theta, 6).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("steering derivative closed form and finite differences") {
    CHECK(steer_derivative(0.0, 5).norm() == doctest::Approx(0.0));

    const VecXc d4 = steer_derivative(kPi / 2.0, 4);
    for (int i = 0; i < 4; ++i) {
        // a_i = 0.5 e^{-j i pi cos} = 0.5 at broadside; derivative = j i pi 0.5
        CHECK(d4(i).real() == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(d4(i).imag() == doctest::Approx(0.5 * i * kPi).epsilon(1e-12));
    }

    const double h = 1e-5;
    for (double theta : {0.3, 1.1, 2.0}) {
        const VecXc fd = (steer_tx(theta + h, 4) - steer_tx(theta - h, 4)) / (2.0 * h);
        CHECK((steer_derivative(theta, 4) - fd).norm() < 1e-6);
    }
}

TEST_CASE("channel snapshot against hand-evaluated geometry") {
    ScenarioConfig cfg = desk_scale_scenario();
    cfg.bs_positions = {Vec2(0.0, -50.0)};
    cfg.carrier_freqs = {30e9};
    cfg.power_budget = {10.0};
    cfg.meas_noise.resize(1);
    cfg.serving_bs = 0;

    TargetState state{{40.0, 0.0}, {20.0, 0.0}};
    const ChannelSnapshot snap = snapshot(state, cfg);

    const double r = std::sqrt(40.0 * 40.0 + 50.0 * 50.0);
    CHECK(snap.range[0] == doctest::Approx(64.03124237).epsilon(1e-9));
    CHECK(snap.tau[0] == doctest::Approx(2.0 * r / 3e8).epsilon(1e-12));
    CHECK(snap.tau[0] == doctest::Approx(426.87e-9).epsilon(1e-4));
    CHECK(snap.doppler[0] == doctest::Approx(2.0 * 30e9 * 20.0 * 40.0 / (3e8 * r)).epsilon(1e-12));
    CHECK(snap.doppler[0] == doctest::Approx(2498.8).epsilon(1e-4));
    CHECK(snap.angle[0] == doctest::Approx(std::acos(40.0 / r)).epsilon(1e-12));
    CHECK(snap.angle[0] == doctest::Approx(0.8961).epsilon(1e-4));

    // reflect coefficient magnitude: sqrt(Nt Nr) |beta| sqrt(eps)
    const double eps_rt = std::pow(1e-3 / (r * r), 2);
    CHECK(std::abs(snap.reflect_coef[0]) ==
          doctest::Approx(4.0 * std::abs(cfg.rcs) * std::sqrt(eps_rt)).epsilon(1e-12));

    SUBCASE("doppler vanishes for transverse motion and flips with velocity") {
        TargetState perp{{40.0, 0.0}, {-50.0, 40.0}}; // v orthogonal to p - b
        CHECK(snapshot(perp, cfg).doppler[0] == doctest::Approx(0.0).epsilon(1e-12));

        TargetState rev{{40.0, 0.0}, {-20.0, 0.0}};
        const ChannelSnapshot back = snapshot(rev, cfg);
        CHECK(back.doppler[0] == doctest::Approx(-snap.doppler[0]));
        CHECK(back.tau[0] == snap.tau[0]);
        CHECK(back.angle[0] == snap.angle[0]);
    }

    SUBCASE("angle is zero on the positive x axis of the BS") {
        TargetState axis{{40.0, -50.0}, {1.0, 0.0}};
        CHECK(snapshot(axis, cfg).angle[0] == doctest::Approx(0.0));
    }

    SUBCASE("degenerate geometry rejected") {
        TargetState bad{{0.0, -50.0}, {1.0, 0.0}};
        CHECK_THROWS(snapshot(bad, cfg));
    }
}

TEST_CASE("noiseless echo matches the frequency-domain model") {
    ScenarioConfig cfg = desk_scale_scenario();
    cfg.rx_noise_power = 0.0;
    const TargetState state{{40.0, 10.0}, {20.0, -3.0}};
    const ChannelSnapshot snap = snapshot(state, cfg);
    const SymbolGrid symbols = make_symbols(cfg, 7);
    const BeamformerSet beams = aligned_beams(cfg, snap);
    const EchoFrame frame = synthesize_echo(cfg, snap, beams, symbols, 0, 7);

    const cplx bf = steer_tx(snap.angle[0], cfg.n_tx).dot(beams.w[0][0]);
    const double expect_mag = std::abs(snap.reflect_coef[0]) * std::abs(bf);
    for (int k = 0; k < cfg.subcarriers; k += 3)
        for (int l = 0; l < cfg.symbols_per_block; l += 5)
            for (int i = 0; i < cfg.n_rx; i += 2)
                CHECK(std::abs(frame.received[i](k, l)) ==
                      doctest::Approx(expect_mag).epsilon(1e-10));

    // symbol-to-symbol phase advance carries the Doppler
    const cplx ratio = (frame.received[0](2, 5) / symbols.s[0](2, 5)) /
                       (frame.received[0](2, 4) / symbols.s[0](2, 4));
    const cplx expect = std::exp(cplx(0.0, 2.0 * kPi * snap.doppler[0] * cfg.t_sym()));
    CHECK(std::abs(ratio - expect) < 1e-10);
}

TEST_CASE("zero beams leave pure noise at the receiver") {
    ScenarioConfig cfg = desk_scale_scenario();
    cfg.subcarriers = 32;
    cfg.symbols_per_block = 32;
    const TargetState state{{40.0, 0.0}, {20.0, 0.0}};
    const ChannelSnapshot snap = snapshot(state, cfg);
    const SymbolGrid symbols = make_symbols(cfg, 5);
    const EchoFrame frame = synthesize_echo(cfg, snap, BeamformerSet::zeros(cfg), symbols, 0, 5);

    double acc = 0.0;
    int count = 0;
    for (int i = 0; i < cfg.n_rx; ++i) {
        acc += frame.received[i].squaredNorm();
        count += cfg.subcarriers * cfg.symbols_per_block;
    }
    CHECK(acc / count == doctest::Approx(cfg.rx_noise_power).epsilon(0.05));
}

TEST_CASE("echo synthesis deterministic per seed") {
    const ScenarioConfig cfg = desk_scale_scenario();
    const TargetState state{{40.0, 0.0}, {20.0, 0.0}};
    const ChannelSnapshot snap = snapshot(state, cfg);
    const SymbolGrid symbols = make_symbols(cfg, 3);
    const BeamformerSet beams = aligned_beams(cfg, snap);
    const EchoFrame a = synthesize_echo(cfg, snap, beams, symbols, 1, 42);
    const EchoFrame b = synthesize_echo(cfg, snap, beams, symbols, 1, 42);
    for (int i = 0; i < cfg.n_rx; ++i)
        CHECK((a.received[i] - b.received[i]).norm() == 0.0);
}

TEST_CASE("communication channel norms and rate arithmetic") {
    ScenarioConfig cfg = desk_scale_scenario();
    const TargetState state{{40.0, 0.0}, {20.0, 0.0}};
    const ChannelSnapshot snap = snapshot(state, cfg); // serving BS at [0,-50]

    const double eps_bar = 1e-3 / 4100.0;
    for (int k = 0; k < cfg.subcarriers; ++k) {
        const VecXc h = comm_channel(cfg, snap, k);
        CHECK(h.squaredNorm() == doctest::Approx(4.0 * eps_bar).epsilon(1e-12));
    }
    CHECK(4.0 * eps_bar == doctest::Approx(9.756e-7).epsilon(1e-4));

    const VecXc h0 = comm_channel(cfg, snap, 0);
    const VecXc h3 = comm_channel(cfg, snap, 3);
    CHECK(std::abs(h0.dot(h3)) == doctest::Approx(4.0 * eps_bar).epsilon(1e-12));

    SUBCASE("rate values") {
        const VecXc w = std::sqrt(0.01) * steer_tx(snap.angle[cfg.serving_bs], cfg.n_tx);
        const double rate = achievable_rate(h0, w, 1e-11);
        const double p = std::norm(h0.dot(w));
        CHECK(p == doctest::Approx(9.756e-9).epsilon(1e-4));
        CHECK(rate == doctest::Approx(std::log2(1.0 + p / 1e-11)).epsilon(1e-12));
        CHECK(rate == doctest::Approx(9.93).epsilon(1e-3));

        CHECK(achievable_rate(h0, VecXc::Zero(4), 1e-11) == 0.0);

        // orthogonal beam gives zero rate
        VecXc wperp = VecXc::Zero(4);
        wperp(0) = std::conj(h0(1));
        wperp(1) = -std::conj(h0(0));
        CHECK(achievable_rate(h0, wperp, 1e-11) == doctest::Approx(0.0).epsilon(1e-12));

        // invariant to a global phase, monotone in the norm along h
        const cplx phase = std::exp(cplx(0.0, 1.234));
        CHECK(achievable_rate(h0, phase * w, 1e-11) == doctest::Approx(rate).epsilon(1e-12));
        CHECK(achievable_rate(h0, 2.0 * w, 1e-11) > rate);
    }
}

TEST_CASE("symbols are unit modulus and beams power check") {
    const ScenarioConfig cfg = desk_scale_scenario();
    const SymbolGrid grid = make_symbols(cfg, 11);
    for (int k = 0; k < cfg.subcarriers; ++k)
        for (int l = 0; l < cfg.symbols_per_block; ++l)
            CHECK(std::abs(grid.s[0](k, l)) == doctest::Approx(1.0).epsilon(1e-12));

    BeamformerSet beams = BeamformerSet::zeros(cfg);
    CHECK(beams.power_ok(cfg));
    beams.w[0][0].setConstant(cplx(10.0, 0.0)); // 400 W in one subcarrier
    CHECK(!beams.power_ok(cfg));
}
