#pragma once

#include "isac/rng.hpp"
#include "isac/scenario.hpp"
#include "isac/types.hpp"

namespace isac {

/// Geometry-derived channel quantities for one target state: round-trip
/// sensing parameters for every BS plus the one-way link of the serving BS.
struct ChannelSnapshot {
    std::vector<double> range;   // ||p - b_m||
    std::vector<double> tau;     // 2 range / c
    std::vector<double> doppler; // 2 f v.(p-b) / (c range)
    std::vector<double> angle;   // arccos((px - bx)/range), in [0, pi]
    std::vector<cplx> reflect_coef; // alpha_m = sqrt(Nt Nr) beta sqrt(eps) e^{-j2pi f tau}
    std::vector<double> pathloss;   // eps_m, round trip

    double tau_bar = 0.0;      // one-way delay to serving BS
    double mu_bar = 0.0;       // one-way Doppler
    double pathloss_bar = 0.0; // one-way path gain
    cplx alpha_bar{0.0, 0.0};  // sqrt(Nt eps_bar) e^{-j2pi f tau_bar}
};

/// Unit-modulus data symbols per BS, K x L.
struct SymbolGrid {
    std::vector<MatXc> s; // [bs](k, l)
};

/// Per-(BS, subcarrier) transmit weights. Power invariant is checked by
/// power_ok(): sum_k ||w[m][k]||^2 <= P_m (1 + 1e-9).
struct BeamformerSet {
    std::vector<std::vector<VecXc>> w; // [bs][k], each length N_t

    double power(int bs) const {
        double p = 0.0;
        for (const auto& wk : w[bs]) p += wk.squaredNorm();
        return p;
    }
    bool power_ok(const ScenarioConfig& cfg, double rel_slack = 1e-9) const;

    static BeamformerSet zeros(const ScenarioConfig& cfg);
};

/// Complex echo grid received by one BS over a block: received(k, l) for
/// each antenna, plus references the estimator needs.
struct EchoFrame {
    int bs_index = 0;
    std::vector<MatXc> received; // [antenna](k, l)
    MatXc symbols;               // s_{m,k}[l], K x L
    std::vector<VecXc> beams;    // w_{m,k} per subcarrier
};

VecXc steer_tx(double theta, int n);
inline VecXc steer_rx(double theta, int n) { return steer_tx(theta, n); }

/// Element i of the derivative is j i pi sin(theta) times the steering entry.
VecXc steer_derivative(double theta, int n);

/// a_r(theta) a_t(theta)^H and its angle derivative
/// Adot = da_r a_t^H + a_r da_t^H.
MatXc steering_outer(double theta, int n_rx, int n_tx);
MatXc steering_outer_derivative(double theta, int n_rx, int n_tx);

ChannelSnapshot snapshot(const TargetState& state, const ScenarioConfig& cfg);

SymbolGrid make_symbols(const ScenarioConfig& cfg, uint64_t seed);

EchoFrame synthesize_echo(const ScenarioConfig& cfg, const ChannelSnapshot& snap,
                          const BeamformerSet& beams, const SymbolGrid& symbols, int bs,
                          uint64_t seed);

/// Equivalent downlink channel of the serving BS at subcarrier k.
VecXc comm_channel(const ScenarioConfig& cfg, const ChannelSnapshot& snap, int k);

double achievable_rate(const VecXc& h, const VecXc& w, double sigma_c2);

/// Sum of per-subcarrier rates for the serving BS beams against a snapshot.
double sum_rate(const ScenarioConfig& cfg, const ChannelSnapshot& snap,
                const BeamformerSet& beams);

} // namespace isac
