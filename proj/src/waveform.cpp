#include "isac/waveform.hpp"

#include <cmath>
#include <stdexcept>

namespace isac {

namespace {
constexpr uint64_t kSymbolStream = 0x53594d42ull;
constexpr uint64_t kEchoStream = 0x4543484full;
} // namespace

bool BeamformerSet::power_ok(const ScenarioConfig& cfg, double rel_slack) const {
    for (int m = 0; m < cfg.num_bs(); ++m)
        if (power(m) > cfg.power_budget[m] * (1.0 + rel_slack)) return false;
    return true;
}

BeamformerSet BeamformerSet::zeros(const ScenarioConfig& cfg) {
    BeamformerSet b;
    b.w.assign(cfg.num_bs(), std::vector<VecXc>(cfg.subcarriers, VecXc::Zero(cfg.n_tx)));
    return b;
}

VecXc steer_tx(double theta, int n) {
    VecXc a(n);
    const double scale = std::sqrt(1.0 / n);
    const double ct = std::cos(theta);
    for (int i = 0; i < n; ++i)
        a(i) = scale * std::exp(cplx(0.0, -i * kPi * ct));
    return a;
}

VecXc steer_derivative(double theta, int n) {
    VecXc a = steer_tx(theta, n);
    const double st = std::sin(theta);
    for (int i = 0; i < n; ++i)
        a(i) *= cplx(0.0, i * kPi * st);
    return a;
}

MatXc steering_outer(double theta, int n_rx, int n_tx) {
    return steer_rx(theta, n_rx) * steer_tx(theta, n_tx).adjoint();
}

MatXc steering_outer_derivative(double theta, int n_rx, int n_tx) {
    return steer_derivative(theta, n_rx) * steer_tx(theta, n_tx).adjoint() +
           steer_rx(theta, n_rx) * steer_derivative(theta, n_tx).adjoint();
}

ChannelSnapshot snapshot(const TargetState& state, const ScenarioConfig& cfg) {
    const int m = cfg.num_bs();
    ChannelSnapshot snap;
    snap.range.resize(m);
    snap.tau.resize(m);
    snap.doppler.resize(m);
    snap.angle.resize(m);
    snap.reflect_coef.resize(m);
    snap.pathloss.resize(m);

    const double gain_amp = std::sqrt(static_cast<double>(cfg.n_tx) * cfg.n_rx);
    for (int i = 0; i < m; ++i) {
        const Vec2 ell = state.position - cfg.bs_positions[i];
        const double r = ell.norm();
        if (r <= 0.0)
            throw std::domain_error("degenerate geometry: target collocated with a BS");
        snap.range[i] = r;
        snap.tau[i] = 2.0 * r / cfg.c;
        snap.doppler[i] =
            2.0 * cfg.carrier_freqs[i] * state.velocity.dot(ell) / (cfg.c * r);
        snap.angle[i] = std::acos(std::clamp(ell(0) / r, -1.0, 1.0));
        const double one_way =
            cfg.pathloss_ref_gain * std::pow(r / cfg.pathloss_ref_dist, -cfg.pathloss_exp);
        snap.pathloss[i] = one_way * one_way; // round trip
        const cplx delta = cfg.rcs * std::sqrt(snap.pathloss[i]);
        snap.reflect_coef[i] =
            gain_amp * delta * std::exp(cplx(0.0, -2.0 * kPi * cfg.carrier_freqs[i] * snap.tau[i]));
    }

    const int u = cfg.serving_bs;
    const Vec2 ell_u = state.position - cfg.bs_positions[u];
    const double r_u = ell_u.norm();
    snap.tau_bar = r_u / cfg.c;
    snap.mu_bar = cfg.carrier_freqs[u] * state.velocity.dot(ell_u) / (cfg.c * r_u);
    snap.pathloss_bar =
        cfg.pathloss_ref_gain * std::pow(r_u / cfg.pathloss_ref_dist, -cfg.pathloss_exp);
    snap.alpha_bar = std::sqrt(cfg.n_tx * snap.pathloss_bar) *
                     std::exp(cplx(0.0, -2.0 * kPi * cfg.carrier_freqs[u] * snap.tau_bar));
    return snap;
}

SymbolGrid make_symbols(const ScenarioConfig& cfg, uint64_t seed) {
    SymbolGrid grid;
    grid.s.resize(cfg.num_bs());
    for (int m = 0; m < cfg.num_bs(); ++m) {
        Rng rng(Rng::derive(seed, kSymbolStream, m));
        MatXc& s = grid.s[m];
        s.resize(cfg.subcarriers, cfg.symbols_per_block);
        const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
        for (int k = 0; k < cfg.subcarriers; ++k) {
            for (int l = 0; l < cfg.symbols_per_block; ++l) {
                const uint64_t bits = rng.next_u64();
                const double re = (bits & 1) ? inv_sqrt2 : -inv_sqrt2;
                const double im = (bits & 2) ? inv_sqrt2 : -inv_sqrt2;
                s(k, l) = cplx(re, im); // QPSK, |s| = 1
            }
        }
    }
    return grid;
}

EchoFrame synthesize_echo(const ScenarioConfig& cfg, const ChannelSnapshot& snap,
                          const BeamformerSet& beams, const SymbolGrid& symbols, int bs,
                          uint64_t seed) {
    const int K = cfg.subcarriers, L = cfg.symbols_per_block, Nr = cfg.n_rx;
    EchoFrame frame;
    frame.bs_index = bs;
    frame.symbols = symbols.s[bs];
    frame.beams = beams.w[bs];
    frame.received.assign(Nr, MatXc::Zero(K, L));

    const double theta = snap.angle[bs];
    const cplx alpha = snap.reflect_coef[bs];
    const VecXc at = steer_tx(theta, cfg.n_tx);
    const double ts = cfg.t_sym();

    Rng rng(Rng::derive(seed, kEchoStream, bs));
    const double comp_var = 0.5 * cfg.rx_noise_power; // CN(0, sigma_m^2) per sample

    for (int k = 0; k < K; ++k) {
        const cplx bf = at.dot(beams.w[bs][k]); // a_t^H w
        const cplx delay_phase = std::exp(cplx(0.0, -2.0 * kPi * k * cfg.delta_f * snap.tau[bs]));
        for (int l = 0; l < L; ++l) {
            const cplx doppler_phase =
                std::exp(cplx(0.0, 2.0 * kPi * snap.doppler[bs] * l * ts));
            const cplx base = alpha * bf * frame.symbols(k, l) * delay_phase * doppler_phase;
            for (int i = 0; i < Nr; ++i) {
                const cplx rx_phase = std::exp(cplx(0.0, -i * kPi * std::cos(theta)));
                cplx noise{0.0, 0.0};
                if (cfg.rx_noise_power > 0.0) noise = rng.cnormal(comp_var);
                frame.received[i](k, l) = base * rx_phase + noise;
            }
        }
    }
    return frame;
}

VecXc comm_channel(const ScenarioConfig& cfg, const ChannelSnapshot& snap, int k) {
    const int u = cfg.serving_bs;
    const cplx phase = std::exp(cplx(0.0, -2.0 * kPi * k * cfg.delta_f * snap.tau_bar));
    return snap.alpha_bar * phase * steer_tx(snap.angle[u], cfg.n_tx);
}

double achievable_rate(const VecXc& h, const VecXc& w, double sigma_c2) {
    if (h.size() != w.size()) throw std::invalid_argument("rate: dimension mismatch");
    const double p = std::norm(h.dot(w)); // |h^H w|^2
    return std::log2(1.0 + p / sigma_c2);
}

double sum_rate(const ScenarioConfig& cfg, const ChannelSnapshot& snap,
                const BeamformerSet& beams) {
    double r = 0.0;
    for (int k = 0; k < cfg.subcarriers; ++k)
        r += achievable_rate(comm_channel(cfg, snap, k), beams.w[cfg.serving_bs][k],
                             cfg.comm_noise_power);
    return r;
}

} // namespace isac
