#pragma once

#include "isac/beamformer.hpp"
#include "isac/tracker.hpp"

#include <string>

namespace isac {

enum class SchemeId { sdr, penalty, nonopt_ekf, feedback_ekf };

std::string scheme_name(SchemeId scheme);
SchemeId scheme_from_name(const std::string& name);

/// One tracking time slot of a run: states, per-BS estimates, rates, the
/// achieved PC-CRLB of the beams in force, and failure flags.
struct TtsRecord {
    int tts = 0;
    double time = 0.0;
    Vec4 true_state = Vec4::Zero();
    Vec4 predicted = Vec4::Zero(); ///< d_{n|n-1} the beams were designed from
    Vec4 updated = Vec4::Zero();   ///< fused estimate d_n
    std::vector<double> tau_hat, mu_hat, theta_hat;
    std::vector<double> subcarrier_rates; ///< realized, true channel
    double sum_rate = 0.0;
    double sum_rate_predicted = 0.0;
    double crlb_trace = 0.0;
    std::vector<double> beam_power;
    double solve_time_s = 0.0;
    int solver_iterations = 0;
    bool infeasible_fallback = false;
    bool non_converged = false;
    bool estimation_dropout = false;

    bool flagged() const { return infeasible_fallback || non_converged || estimation_dropout; }
    double position_error() const {
        return std::hypot(updated(0) - true_state(0), updated(1) - true_state(1));
    }
};

struct TrackingLog {
    std::string scheme;
    uint64_t seed = 0;
    std::string measurement_mode;
    std::vector<TtsRecord> records;

    double position_rmse() const;
    double max_position_error() const;
};

/// Runs the two-stage loop over the horizon: stage I senses and fuses with
/// the beams designed in the previous slot, stage II designs the next
/// beams at the fresh prediction. Fully deterministic given the seed.
TrackingLog run_tracking(const ScenarioConfig& cfg, SchemeId scheme, uint64_t seed);

/// Feedback benchmark: angle-only observations fed back by the device with
/// one-slot delay, beams aligned at predicted angles, no echo processing.
TrackingLog run_feedback_scheme(const ScenarioConfig& cfg, uint64_t seed);

enum class SweepAxis { power, eta, num_bs, antennas, velocity };

SweepAxis sweep_axis_from_name(const std::string& name);
std::string sweep_axis_name(SweepAxis axis);

struct SweepCell {
    double value = 0.0;
    std::string scheme;
    uint64_t seed = 0;
    double peak_rate = 0.0;
    double avg_rate = 0.0;
    double min_crlb = 0.0;
    double avg_crlb = 0.0;
    double rmse = 0.0;
    double max_err = 0.0;
    int flagged_tts = 0;
    bool failed = false;
};

struct SweepTable {
    std::string axis;
    std::vector<SweepCell> cells;

    /// Mean over seeds of a cell metric at (value, scheme).
    double mean(double value, const std::string& scheme, double SweepCell::* metric) const;
};

/// Applies one sweep-axis value to a base config (power values are dBm;
/// num_bs reconfigures the BS set with the fourth site at [0, 50] m).
ScenarioConfig apply_axis(const ScenarioConfig& base, SweepAxis axis, double value);

SweepTable run_sweep(const ScenarioConfig& cfg, SweepAxis axis, const std::vector<double>& values,
                     const std::vector<SchemeId>& schemes, const std::vector<uint64_t>& seeds);

/// Empirical CDFs of sum rate and position error over all TTS x seed
/// samples, for the full BS set and the single-BS variant.
struct CdfTable {
    std::vector<double> quantiles;
    std::vector<std::string> schemes;
    std::vector<std::vector<double>> rate_q;       // [scheme][quantile]
    std::vector<std::vector<double>> err_multi_q;  // position error, all BSs
    std::vector<std::vector<double>> err_single_q; // serving BS only
};

CdfTable compare_schemes(const ScenarioConfig& cfg, const std::vector<SchemeId>& schemes,
                         const std::vector<uint64_t>& seeds);

// ------------------------------------------------------------------ export

std::string tracking_log_csv_header(const ScenarioConfig& cfg);
void export_csv(const TrackingLog& log, const ScenarioConfig& cfg, const std::string& path);
void export_json(const TrackingLog& log, const std::string& path);
TrackingLog import_log_json(const std::string& path);

void export_csv(const SweepTable& table, const std::string& path);
void export_json(const SweepTable& table, const std::string& path);
SweepTable import_sweep_json(const std::string& path);

void export_csv(const CdfTable& table, const std::string& path);
void export_json(const CdfTable& table, const std::string& path);

/// Minimal static line plot (one polyline per series).
void export_svg_lines(const std::string& path, const std::string& title,
                      const std::vector<std::string>& series_names,
                      const std::vector<std::vector<double>>& xs,
                      const std::vector<std::vector<double>>& ys);

} // namespace isac
