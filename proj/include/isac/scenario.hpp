#pragma once

#include "isac/types.hpp"

#include <string>
#include <vector>

namespace isac {

enum class MeasurementMode { full_signal, statistical };

/// Per-BS measurement noise of the stacked model: delay std (s), Doppler
/// std (Hz), and the per-real-component variance of the matched-filter
/// samples (W).
struct MeasNoise {
    double sigma_tau = 1e-9;
    double sigma_mu = 50.0;
    double sigma_theta2 = 1e-11;
};

struct PenaltyParams {
    double rho0 = 0.0; ///< initial penalty factor; 0 = auto-scale from the FIM constants
    double xi = 0.8;
    double kappa_tol = 1e-6;
    double inner_tol = 1e-5;
    int max_inner = 50;
    int max_outer = 30;
};

struct SdrParams {
    double rank_tol = 1e-6;
    int randomization_trials = 100;
};

struct FeedbackParams {
    double sigma_deg = 0.5; ///< std of the fed-back angle observation
    int delay_tts = 1;
};

/// All physical constants, geometry, OFDM numerology and algorithm knobs.
/// Immutable after validation; everything downstream takes it by const ref.
struct ScenarioConfig {
    // geometry / RF
    std::vector<Vec2> bs_positions;
    std::vector<double> carrier_freqs; // Hz
    int n_tx = 4;
    int n_rx = 4;
    int subcarriers = 0;       // K
    int symbols_per_block = 0; // L
    double delta_f = 0.0;      // Hz
    double t_elem = 0.0;       // s
    double t_cp = 0.0;         // s
    std::vector<double> power_budget; // W, per BS
    double crlb_threshold = 0.01;     // m^2
    int serving_bs = 0;
    double tts_duration = 0.02; // s
    double horizon = 4.0;       // s
    double c = 3e8;

    // target / channel
    cplx rcs{0.2, 0.2};
    double pathloss_ref_gain = 1e-3; // linear gain at ref distance
    double pathloss_ref_dist = 1.0;  // m
    double pathloss_exp = 2.0;
    Vec4 initial_state{40.0, 0.0, 20.0, 0.0};

    // noise
    double process_noise[4] = {0.02, 0.02, 0.01, 0.01}; // std: px, py, vx, vy
    double rx_noise_power = 1e-11;   // sigma_m^2, W
    double comm_noise_power = 1e-11; // sigma_c^2, W
    std::vector<MeasNoise> meas_noise;
    double mf_gain = 1.0;

    // estimator knobs
    int angle_pad = 8;
    int delay_doppler_pad = 4;
    double division_floor_scale = 1e-8;

    // tracker init proxy for beam training
    double init_pos_std = 0.5; // m
    double init_vel_std = 0.5; // m/s

    PenaltyParams penalty_params;
    SdrParams sdr_params;
    FeedbackParams feedback;

    MeasurementMode measurement_mode = MeasurementMode::statistical;
    uint64_t rng_seed = 1;

    int num_bs() const { return static_cast<int>(bs_positions.size()); }
    double t_sym() const { return t_elem + t_cp; }
    double bandwidth() const { return subcarriers * delta_f; }
    int num_tts() const { return static_cast<int>(std::floor(horizon / tts_duration + 0.5)); }
};

/// Kinematic state of the tracked device.
struct TargetState {
    Vec2 position{0.0, 0.0};
    Vec2 velocity{0.0, 0.0};

    Vec4 stacked() const {
        Vec4 d;
        d << position(0), position(1), velocity(0), velocity(1);
        return d;
    }
    static TargetState from_stacked(const Vec4& d) {
        return {{d(0), d(1)}, {d(2), d(3)}};
    }
};

/// Nearly-constant-velocity evolution: p' = p + dT v, v' = v.
struct MotionModel {
    Mat4 transition;  // F
    Mat4 process_cov; // Q_u, diagonal
    double dt = 0.0;

    /// Deterministic part of the evolution, computed componentwise so the
    /// position block is exactly p + dT*v.
    Vec4 apply(const Vec4& d) const {
        Vec4 out;
        out(0) = d(0) + dt * d(2);
        out(1) = d(1) + dt * d(3);
        out(2) = d(2);
        out(3) = d(3);
        return out;
    }
};

MotionModel make_motion_model(const ScenarioConfig& cfg);

/// The full-scale configuration used by the reference experiments.
ScenarioConfig default_paper_scenario();

/// Same geometry and physics at K=8, L=16; every test and acceptance run
/// uses this preset. delta_f is widened so K*delta_f keeps the paper
/// bandwidth, and the measurement-noise defaults are re-pointed at the
/// desk-scale resolution cells (see preset body).
ScenarioConfig desk_scale_scenario();

ScenarioConfig preset_by_name(const std::string& name);

/// Every violated invariant as a named diagnostic; empty means valid.
std::vector<std::string> validate(const ScenarioConfig& cfg);

/// Throwing wrapper around validate().
const ScenarioConfig& validate_or_throw(const ScenarioConfig& cfg);

std::string to_json(const ScenarioConfig& cfg);
ScenarioConfig config_from_json(const std::string& text);
ScenarioConfig load_config_file(const std::string& path);
void save_config_file(const ScenarioConfig& cfg, const std::string& path);

} // namespace isac
