#pragma once

#include "isac/waveform.hpp"

#include <limits>

namespace isac {

/// Stacked per-BS measurement r_m = (tau_hat, mu_hat, y_tilde) with its
/// noise levels. y_tilde is stacked k-major, l-minor, antenna innermost.
/// `alpha` carries the reflection coefficient the measurement model treats
/// as known (estimated from the frame in full-signal mode, true value in
/// statistical mode).
struct MeasurementBundle {
    int bs_index = 0;
    double tau_hat = 0.0;
    double mu_hat = 0.0;
    VecXc y_tilde; // length L K N_r
    cplx alpha{0.0, 0.0};
    double sigma_tau = 0.0;    // std, s
    double sigma_mu = 0.0;     // std, Hz
    double sigma_theta2 = 0.0; // per-component variance, W
};

struct AngleEstimate {
    double theta = 0.0;
    double cos_theta = 0.0;
    int peak_bin = 0;
};

/// Spatial-DFT angle estimation: zero-padded N_r-point DFT across antennas,
/// noncoherent accumulation over (k, l), quadratic peak interpolation.
AngleEstimate estimate_angle(const EchoFrame& frame, int pad_factor = 8);

/// Element-wise division of the frame by a_t(theta_hat)^H x_{m,k}[l].
/// Fails with the offending indices when a divisor falls below
/// floor_scale * sqrt(P_m / K).
std::vector<MatXc> remove_symbols(const EchoFrame& frame, double theta_hat,
                                  const ScenarioConfig& cfg);

struct DelayDopplerEstimate {
    double tau = 0.0; // in [0, 1/delta_f)
    double mu = 0.0;  // in [-1/(2 T_s), 1/(2 T_s))
};

/// 2D-DFT (K-point IDFT over subcarriers, L-point DFT over symbols, both
/// zero-padded) with per-axis quadratic peak refinement, accumulated
/// noncoherently over antennas.
DelayDopplerEstimate estimate_delay_doppler(const std::vector<MatXc>& divided,
                                            const ScenarioConfig& cfg, int pad_factor = 4);

/// Compensates the estimated delay/Doppler phases and removes the symbols,
/// then stacks (k-major, l-minor, antenna innermost).
VecXc matched_filter(const EchoFrame& frame, double tau_hat, double mu_hat,
                     const ScenarioConfig& cfg);

/// Full-signal chain for one BS: angle -> divide -> 2D-DFT -> matched
/// filter. The 2D-DFT delay is ambiguous modulo 1/delta_f; when tau_hint is
/// finite (e.g. the track prediction) the returned delay is unwrapped to
/// the period nearest the hint.
MeasurementBundle process_frame(const EchoFrame& frame, const ScenarioConfig& cfg,
                                double tau_hint = std::numeric_limits<double>::quiet_NaN());

/// Statistical shortcut: draws (tau_hat, mu_hat, y_tilde) directly from the
/// measurement models, bypassing frame synthesis.
std::vector<MeasurementBundle> simulate_measurements(const ScenarioConfig& cfg,
                                                     const TargetState& true_state,
                                                     const BeamformerSet& beams, uint64_t seed);

/// Noiseless matched-filter model o_m stacked over (k, l): entries
/// alpha * omega * a_r(theta) a_t(theta)^H w_{m,k}.
VecXc stacked_measurement_model(const ScenarioConfig& cfg, cplx alpha, double theta,
                                const std::vector<VecXc>& beams_m);

} // namespace isac
