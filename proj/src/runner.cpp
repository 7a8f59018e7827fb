#include "isac/runner.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace isac {

using nlohmann::json;

namespace {

constexpr uint64_t kTruthStream = 0x54525554ull;
constexpr uint64_t kMeasStream = 0x4d454153ull;
constexpr uint64_t kFeedbackStream = 0x46444241ull;

std::vector<double> predicted_angles(const Vec4& d, const ScenarioConfig& cfg) {
    const ChannelSnapshot snap = snapshot(TargetState::from_stacked(d), cfg);
    return snap.angle;
}

BeamformerSet max_ratio_init(const BeamProblem& prob, const ScenarioConfig& cfg) {
    BeamformerSet beams = BeamformerSet::zeros(cfg);
    for (int m = 0; m < prob.num_bs; ++m) {
        const double scale = std::sqrt(prob.power_budget[m] / prob.subcarriers);
        for (int k = 0; k < prob.subcarriers; ++k) {
            if (m == prob.serving_bs && prob.h[k].norm() > 0.0)
                beams.w[m][k] = scale * prob.h[k].normalized();
            else
                beams.w[m][k] = scale * steer_tx(kPi / 2.0, prob.n_tx);
        }
    }
    return beams;
}

struct DesignOutcome {
    BeamformerSet beams;
    bool infeasible_fallback = false;
    bool non_converged = false;
    double solve_time_s = 0.0;
    int iterations = 0;
};

/// Stage II: scheme-specific beams for the prediction; any failure falls
/// back to the aligned benchmark beams with a flag.
DesignOutcome design_beams(SchemeId scheme, const TrackState& pred, const ScenarioConfig& cfg,
                           const conic::Solver& solver) {
    DesignOutcome out;
    if (scheme == SchemeId::nonopt_ekf || scheme == SchemeId::feedback_ekf) {
        out.beams = nonopt_beams(predicted_angles(pred.estimate, cfg), cfg);
        return out;
    }

    const BeamProblem prob = build_problem(pred.estimate, pred.covariance, cfg);
    if (scheme == SchemeId::sdr) {
        const SdrResult res = solve_sdr(prob, solver);
        out.solve_time_s = res.diag.wall_time_s;
        out.iterations = res.diag.iterations;
        if (res.diag.status == "optimal" && res.diag.feasible) {
            out.beams = res.beams;
            return out;
        }
        out.infeasible_fallback = true;
        out.beams = nonopt_beams(predicted_angles(pred.estimate, cfg), cfg);
        return out;
    }

    const PenaltyResult res = solve_penalty(prob, max_ratio_init(prob, cfg), solver);
    out.solve_time_s = res.diag.wall_time_s;
    out.iterations = res.diag.iterations;
    if (res.diag.feasible) {
        out.beams = res.beams;
        out.non_converged = res.diag.status != "optimal";
        return out;
    }
    out.infeasible_fallback = true;
    out.beams = nonopt_beams(predicted_angles(pred.estimate, cfg), cfg);
    return out;
}

std::vector<MeasurementBundle> sense(const ScenarioConfig& cfg, const TargetState& truth,
                                     const BeamformerSet& beams, const TrackState& pred,
                                     uint64_t seed, int tts, bool* dropout) {
    if (cfg.measurement_mode == MeasurementMode::statistical)
        return simulate_measurements(cfg, truth, beams, Rng::derive(seed, kMeasStream, tts));

    const ChannelSnapshot truth_snap = snapshot(truth, cfg);
    const ChannelSnapshot pred_snap =
        snapshot(TargetState::from_stacked(pred.estimate), cfg);
    const SymbolGrid symbols = make_symbols(cfg, Rng::derive(seed, kMeasStream, tts, 1));
    std::vector<MeasurementBundle> bundles;
    for (int m = 0; m < cfg.num_bs(); ++m) {
        try {
            const EchoFrame frame = synthesize_echo(cfg, truth_snap, beams, symbols, m,
                                                    Rng::derive(seed, kMeasStream, tts, 2));
            bundles.push_back(process_frame(frame, cfg, pred_snap.tau[m]));
        } catch (const std::domain_error&) {
            *dropout = true; // beam null or empty frame: skip this BS this slot
        }
    }
    return bundles;
}

double realized_sum_rate(const ScenarioConfig& cfg, const TargetState& truth,
                         const BeamformerSet& beams, std::vector<double>* per_k) {
    const ChannelSnapshot snap = snapshot(truth, cfg);
    double sum = 0.0;
    per_k->clear();
    for (int k = 0; k < cfg.subcarriers; ++k) {
        const double r = achievable_rate(comm_channel(cfg, snap, k),
                                         beams.w[cfg.serving_bs][k], cfg.comm_noise_power);
        per_k->push_back(r);
        sum += r;
    }
    return sum;
}

TargetState evolve_truth(const TargetState& s, const MotionModel& model,
                         const ScenarioConfig& cfg, uint64_t seed, int tts) {
    Rng rng(Rng::derive(seed, kTruthStream, tts));
    Vec4 d = model.apply(s.stacked());
    for (int i = 0; i < 4; ++i) d(i) += rng.normal(0.0, cfg.process_noise[i]);
    return TargetState::from_stacked(d);
}

} // namespace

std::string scheme_name(SchemeId scheme) {
    switch (scheme) {
        case SchemeId::sdr: return "sdr";
        case SchemeId::penalty: return "penalty";
        case SchemeId::nonopt_ekf: return "nonopt-ekf";
        case SchemeId::feedback_ekf: return "feedback-ekf";
    }
    return "?";
}

SchemeId scheme_from_name(const std::string& name) {
    if (name == "sdr") return SchemeId::sdr;
    if (name == "penalty") return SchemeId::penalty;
    if (name == "nonopt-ekf" || name == "nonopt_ekf") return SchemeId::nonopt_ekf;
    if (name == "feedback-ekf" || name == "feedback_ekf") return SchemeId::feedback_ekf;
    throw std::invalid_argument("unknown scheme: " + name);
}

double TrackingLog::position_rmse() const {
    double acc = 0.0;
    for (const auto& r : records) acc += r.position_error() * r.position_error();
    return records.empty() ? 0.0 : std::sqrt(acc / records.size());
}

double TrackingLog::max_position_error() const {
    double worst = 0.0;
    for (const auto& r : records) worst = std::max(worst, r.position_error());
    return worst;
}

TrackingLog run_tracking(const ScenarioConfig& cfg, SchemeId scheme, uint64_t seed) {
    if (scheme == SchemeId::feedback_ekf) return run_feedback_scheme(cfg, seed);
    validate_or_throw(cfg);

    TrackingLog log;
    log.scheme = scheme_name(scheme);
    log.seed = seed;
    log.measurement_mode =
        cfg.measurement_mode == MeasurementMode::full_signal ? "full_signal" : "statistical";

    const MotionModel model = make_motion_model(cfg);
    const conic::Solver solver;
    const int n_tts = cfg.num_tts();

    TargetState truth = TargetState::from_stacked(cfg.initial_state);
    // beam-training proxy supplies the very first prediction
    TrackState pred = initialize(cfg, truth, seed);
    DesignOutcome design = design_beams(scheme, pred, cfg, solver);

    for (int n = 0; n < n_tts; ++n) {
        if (n > 0) truth = evolve_truth(truth, model, cfg, seed, n);

        TtsRecord rec;
        rec.tts = n;
        rec.time = n * cfg.tts_duration;
        rec.true_state = truth.stacked();
        rec.predicted = pred.estimate;
        rec.infeasible_fallback = design.infeasible_fallback;
        rec.non_converged = design.non_converged;
        rec.solve_time_s = design.solve_time_s;
        rec.solver_iterations = design.iterations;

        // stage I: sense with the beams in force, then fuse
        bool dropout = false;
        const auto bundles = sense(cfg, truth, design.beams, pred, seed, n, &dropout);
        rec.estimation_dropout = dropout || bundles.empty();
        for (const auto& b : bundles) {
            rec.tau_hat.push_back(b.tau_hat);
            rec.mu_hat.push_back(b.mu_hat);
        }

        TrackState updated = pred;
        if (!bundles.empty()) {
            try {
                updated = update(pred, bundles, cfg, design.beams);
            } catch (const std::runtime_error&) {
                rec.estimation_dropout = true;
            }
        }
        rec.updated = updated.estimate;

        rec.sum_rate = realized_sum_rate(cfg, truth, design.beams, &rec.subcarrier_rates);
        {
            const ChannelSnapshot pred_snap =
                snapshot(TargetState::from_stacked(pred.estimate), cfg);
            double sum = 0.0;
            for (int k = 0; k < cfg.subcarriers; ++k)
                sum += achievable_rate(comm_channel(cfg, pred_snap, k),
                                       design.beams.w[cfg.serving_bs][k], cfg.comm_noise_power);
            rec.sum_rate_predicted = sum;
            for (int m = 0; m < cfg.num_bs(); ++m) rec.theta_hat.push_back(pred_snap.angle[m]);
        }
        try {
            rec.crlb_trace = pc_crlb_trace(pred.estimate, pred.covariance, cfg, design.beams);
        } catch (const std::runtime_error&) {
            rec.crlb_trace = std::numeric_limits<double>::quiet_NaN();
        }
        for (int m = 0; m < cfg.num_bs(); ++m) rec.beam_power.push_back(design.beams.power(m));
        log.records.push_back(std::move(rec));

        // stage II: predict and design the next slot's beams
        pred = predict(updated, model);
        design = design_beams(scheme, pred, cfg, solver);
    }
    return log;
}

TrackingLog run_feedback_scheme(const ScenarioConfig& cfg, uint64_t seed) {
    validate_or_throw(cfg);

    TrackingLog log;
    log.scheme = scheme_name(SchemeId::feedback_ekf);
    log.seed = seed;
    log.measurement_mode = "feedback";

    const MotionModel model = make_motion_model(cfg);
    const int n_tts = cfg.num_tts();
    const double sigma_fb = cfg.feedback.sigma_deg * kPi / 180.0;
    const int delay = std::max(cfg.feedback.delay_tts, 0);

    TargetState truth = TargetState::from_stacked(cfg.initial_state);
    TrackState pred = initialize(cfg, truth, seed);
    BeamformerSet beams = nonopt_beams(predicted_angles(pred.estimate, cfg), cfg);

    // queue of per-BS angle observations taken at past slots
    std::vector<std::vector<double>> obs_queue;

    for (int n = 0; n < n_tts; ++n) {
        if (n > 0) truth = evolve_truth(truth, model, cfg, seed, n);

        // the device measures the pilot angles this slot; they become
        // available `delay` slots later
        {
            const ChannelSnapshot snap = snapshot(truth, cfg);
            Rng rng(Rng::derive(seed, kFeedbackStream, n));
            std::vector<double> obs(cfg.num_bs());
            for (int m = 0; m < cfg.num_bs(); ++m)
                obs[m] = snap.angle[m] + rng.normal(0.0, sigma_fb);
            obs_queue.push_back(std::move(obs));
        }

        TtsRecord rec;
        rec.tts = n;
        rec.time = n * cfg.tts_duration;
        rec.true_state = truth.stacked();
        rec.predicted = pred.estimate;

        TrackState updated = pred;
        const int avail = n - delay;
        if (avail >= 0) {
            const std::vector<double>& obs = obs_queue[avail];
            rec.theta_hat = obs;
            // angle-only information update at the prediction
            const Vec2 p(pred.estimate(0), pred.estimate(1));
            Mat4 info = pred.covariance.inverse();
            Vec4 rhs = Vec4::Zero();
            const double w_th = 1.0 / (sigma_fb * sigma_fb);
            for (int m = 0; m < cfg.num_bs(); ++m) {
                const Vec2 ell = p - cfg.bs_positions[m];
                const double r2 = ell.squaredNorm();
                const double theta_pred = std::acos(std::clamp(ell(0) / std::sqrt(r2), -1.0, 1.0));
                // theta = arccos maps into [0, pi]; its gradient carries
                // |ell_y| (the angle is uninformative on the BS axis)
                const double sgn = ell(1) > 0.0 ? 1.0 : (ell(1) < 0.0 ? -1.0 : 0.0);
                Vec4 g = Vec4::Zero();
                g(0) = -std::abs(ell(1)) / r2;
                g(1) = sgn * ell(0) / r2;
                info += w_th * g * g.transpose();
                rhs += w_th * (obs[m] - theta_pred) * g;
            }
            info = 0.5 * (info + info.transpose()).eval();
            const Eigen::LDLT<Mat4> ldlt(info);
            updated.covariance = ldlt.solve(Mat4::Identity());
            updated.covariance =
                0.5 * (updated.covariance + updated.covariance.transpose()).eval();
            updated.estimate = pred.estimate + ldlt.solve(rhs);
        }
        rec.updated = updated.estimate;

        rec.sum_rate = realized_sum_rate(cfg, truth, beams, &rec.subcarrier_rates);
        try {
            rec.crlb_trace = pc_crlb_trace(pred.estimate, pred.covariance, cfg, beams);
        } catch (const std::runtime_error&) {
            rec.crlb_trace = std::numeric_limits<double>::quiet_NaN();
        }
        for (int m = 0; m < cfg.num_bs(); ++m) rec.beam_power.push_back(beams.power(m));
        log.records.push_back(std::move(rec));

        pred = predict(updated, model);
        beams = nonopt_beams(predicted_angles(pred.estimate, cfg), cfg);
    }
    return log;
}

// -------------------------------------------------------------------- sweep

SweepAxis sweep_axis_from_name(const std::string& name) {
    if (name == "power") return SweepAxis::power;
    if (name == "eta") return SweepAxis::eta;
    if (name == "num_bs" || name == "num-bs") return SweepAxis::num_bs;
    if (name == "antennas") return SweepAxis::antennas;
    if (name == "velocity") return SweepAxis::velocity;
    throw std::invalid_argument("unknown sweep axis: " + name);
}

std::string sweep_axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::power: return "power";
        case SweepAxis::eta: return "eta";
        case SweepAxis::num_bs: return "num_bs";
        case SweepAxis::antennas: return "antennas";
        case SweepAxis::velocity: return "velocity";
    }
    return "?";
}

ScenarioConfig apply_axis(const ScenarioConfig& base, SweepAxis axis, double value) {
    ScenarioConfig cfg = base;
    switch (axis) {
        case SweepAxis::power:
            for (auto& p : cfg.power_budget) p = dbm_to_watts(value);
            break;
        case SweepAxis::eta:
            cfg.crlb_threshold = value;
            break;
        case SweepAxis::num_bs: {
            // BS sets of the reference experiments: {3}, {3,4}, {1,2,3},
            // {1,2,3,4} with the fourth site mirrored at [0, 50] m.
            const int count = static_cast<int>(value);
            const Vec2 bs4(0.0, 50.0);
            const double f4 = 31e9;
            const ScenarioConfig ref = base;
            std::vector<int> idx;
            std::vector<Vec2> pos;
            std::vector<double> freq;
            switch (count) {
                case 1:
                    pos = {ref.bs_positions[2]};
                    freq = {ref.carrier_freqs[2]};
                    break;
                case 2:
                    pos = {ref.bs_positions[2], bs4};
                    freq = {ref.carrier_freqs[2], f4};
                    break;
                case 3:
                    pos = {ref.bs_positions[0], ref.bs_positions[1], ref.bs_positions[2]};
                    freq = {ref.carrier_freqs[0], ref.carrier_freqs[1], ref.carrier_freqs[2]};
                    break;
                case 4:
                    pos = {ref.bs_positions[0], ref.bs_positions[1], ref.bs_positions[2], bs4};
                    freq = {ref.carrier_freqs[0], ref.carrier_freqs[1], ref.carrier_freqs[2],
                            f4};
                    break;
                default:
                    throw std::invalid_argument("num_bs sweep supports 1..4");
            }
            cfg.bs_positions = pos;
            cfg.carrier_freqs = freq;
            cfg.power_budget.assign(pos.size(), base.power_budget[0]);
            cfg.meas_noise.assign(pos.size(), base.meas_noise[0]);
            cfg.serving_bs = count <= 2 ? 0 : 2; // the site at [0, -50] serves
            break;
        }
        case SweepAxis::antennas:
            cfg.n_tx = static_cast<int>(value);
            cfg.n_rx = static_cast<int>(value);
            break;
        case SweepAxis::velocity: {
            // same trajectory shape, scaled speed
            const double speed =
                std::hypot(base.initial_state(2), base.initial_state(3));
            const double scale = speed > 0.0 ? value / speed : 0.0;
            cfg.initial_state(2) = base.initial_state(2) * scale;
            cfg.initial_state(3) = base.initial_state(3) * scale;
            break;
        }
    }
    return cfg;
}

double SweepTable::mean(double value, const std::string& scheme,
                        double SweepCell::* metric) const {
    double acc = 0.0;
    int count = 0;
    for (const auto& c : cells) {
        if (c.scheme == scheme && c.value == value && !c.failed) {
            acc += c.*metric;
            ++count;
        }
    }
    return count > 0 ? acc / count : std::numeric_limits<double>::quiet_NaN();
}

SweepTable run_sweep(const ScenarioConfig& cfg, SweepAxis axis, const std::vector<double>& values,
                     const std::vector<SchemeId>& schemes, const std::vector<uint64_t>& seeds) {
    SweepTable table;
    table.axis = sweep_axis_name(axis);
    for (double value : values) {
        for (SchemeId scheme : schemes) {
            for (uint64_t seed : seeds) {
                SweepCell cell;
                cell.value = value;
                cell.scheme = scheme_name(scheme);
                cell.seed = seed;
                try {
                    const ScenarioConfig run_cfg = apply_axis(cfg, axis, value);
                    const TrackingLog log = run_tracking(run_cfg, scheme, seed);
                    double rate_acc = 0.0, crlb_acc = 0.0;
                    double peak = 0.0, min_crlb = std::numeric_limits<double>::infinity();
                    int crlb_count = 0;
                    for (const auto& r : log.records) {
                        rate_acc += r.sum_rate;
                        peak = std::max(peak, r.sum_rate);
                        if (std::isfinite(r.crlb_trace)) {
                            crlb_acc += r.crlb_trace;
                            min_crlb = std::min(min_crlb, r.crlb_trace);
                            ++crlb_count;
                        }
                        if (r.flagged()) ++cell.flagged_tts;
                    }
                    cell.peak_rate = peak;
                    cell.avg_rate = rate_acc / log.records.size();
                    cell.avg_crlb = crlb_count ? crlb_acc / crlb_count
                                               : std::numeric_limits<double>::quiet_NaN();
                    cell.min_crlb = min_crlb;
                    cell.rmse = log.position_rmse();
                    cell.max_err = log.max_position_error();
                } catch (const std::exception&) {
                    cell.failed = true;
                }
                table.cells.push_back(cell);
            }
        }
    }
    return table;
}

namespace {

std::vector<double> quantiles_of(std::vector<double> samples, const std::vector<double>& probs) {
    std::sort(samples.begin(), samples.end());
    std::vector<double> out;
    out.reserve(probs.size());
    for (double p : probs) {
        if (samples.empty()) {
            out.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const double pos = p * (samples.size() - 1);
        const size_t lo = static_cast<size_t>(std::floor(pos));
        const size_t hi = std::min(lo + 1, samples.size() - 1);
        const double frac = pos - lo;
        out.push_back(samples[lo] * (1.0 - frac) + samples[hi] * frac);
    }
    return out;
}

} // namespace

CdfTable compare_schemes(const ScenarioConfig& cfg, const std::vector<SchemeId>& schemes,
                         const std::vector<uint64_t>& seeds) {
    if (seeds.empty()) throw std::invalid_argument("compare_schemes needs at least one seed");
    CdfTable table;
    for (int i = 1; i <= 19; ++i) table.quantiles.push_back(0.05 * i);

    // single-BS variant per the reference comparison layout
    const ScenarioConfig single = apply_axis(cfg, SweepAxis::num_bs, 1.0);

    for (SchemeId scheme : schemes) {
        std::vector<double> rates, errs_multi, errs_single;
        for (uint64_t seed : seeds) {
            const TrackingLog log = run_tracking(cfg, scheme, seed);
            for (const auto& r : log.records) {
                rates.push_back(r.sum_rate);
                errs_multi.push_back(r.position_error());
            }
            const TrackingLog slog = run_tracking(single, scheme, seed);
            for (const auto& r : slog.records) errs_single.push_back(r.position_error());
        }
        table.schemes.push_back(scheme_name(scheme));
        table.rate_q.push_back(quantiles_of(std::move(rates), table.quantiles));
        table.err_multi_q.push_back(quantiles_of(std::move(errs_multi), table.quantiles));
        table.err_single_q.push_back(quantiles_of(std::move(errs_single), table.quantiles));
    }
    return table;
}

// ------------------------------------------------------------------- export

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

json vec4_json(const Vec4& v) { return json::array({v(0), v(1), v(2), v(3)}); }

Vec4 vec4_from(const json& j) {
    Vec4 v;
    for (int i = 0; i < 4; ++i) v(i) = j.at(i).get<double>();
    return v;
}

} // namespace

std::string tracking_log_csv_header(const ScenarioConfig& cfg) {
    std::ostringstream os;
    os << "tts,time,scheme,flag_infeasible,flag_nonconverged,flag_dropout,"
          "true_px,true_py,true_vx,true_vy,"
          "pred_px,pred_py,pred_vx,pred_vy,"
          "est_px,est_py,est_vx,est_vy,"
          "sum_rate,sum_rate_pred,crlb_trace,solve_time_s,solver_iterations";
    for (int m = 0; m < cfg.num_bs(); ++m)
        os << ",tau_hat_" << m << ",mu_hat_" << m << ",theta_hat_" << m << ",beam_power_" << m;
    for (int k = 0; k < cfg.subcarriers; ++k) os << ",rate_" << k;
    return os.str();
}

void export_csv(const TrackingLog& log, const ScenarioConfig& cfg, const std::string& path) {
    std::ostringstream os;
    os << tracking_log_csv_header(cfg) << "\n";
    os.precision(17);
    for (const auto& r : log.records) {
        os << r.tts << ',' << r.time << ',' << log.scheme << ',' << r.infeasible_fallback << ','
           << r.non_converged << ',' << r.estimation_dropout;
        for (int i = 0; i < 4; ++i) os << ',' << r.true_state(i);
        for (int i = 0; i < 4; ++i) os << ',' << r.predicted(i);
        for (int i = 0; i < 4; ++i) os << ',' << r.updated(i);
        os << ',' << r.sum_rate << ',' << r.sum_rate_predicted << ',' << r.crlb_trace << ','
           << r.solve_time_s << ',' << r.solver_iterations;
        for (int m = 0; m < cfg.num_bs(); ++m) {
            const double tau = m < static_cast<int>(r.tau_hat.size())
                                   ? r.tau_hat[m]
                                   : std::numeric_limits<double>::quiet_NaN();
            const double mu = m < static_cast<int>(r.mu_hat.size())
                                  ? r.mu_hat[m]
                                  : std::numeric_limits<double>::quiet_NaN();
            const double th = m < static_cast<int>(r.theta_hat.size())
                                  ? r.theta_hat[m]
                                  : std::numeric_limits<double>::quiet_NaN();
            const double bp = m < static_cast<int>(r.beam_power.size())
                                  ? r.beam_power[m]
                                  : std::numeric_limits<double>::quiet_NaN();
            os << ',' << tau << ',' << mu << ',' << th << ',' << bp;
        }
        for (int k = 0; k < cfg.subcarriers; ++k) {
            const double v = k < static_cast<int>(r.subcarrier_rates.size())
                                 ? r.subcarrier_rates[k]
                                 : std::numeric_limits<double>::quiet_NaN();
            os << ',' << v;
        }
        os << "\n";
    }
    write_file(path, os.str());
}

void export_json(const TrackingLog& log, const std::string& path) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = "tracking_log";
    j["scheme"] = log.scheme;
    j["seed"] = log.seed;
    j["measurement_mode"] = log.measurement_mode;
    json records = json::array();
    for (const auto& r : log.records) {
        json rec;
        rec["tts"] = r.tts;
        rec["time"] = r.time;
        rec["true_state"] = vec4_json(r.true_state);
        rec["predicted"] = vec4_json(r.predicted);
        rec["updated"] = vec4_json(r.updated);
        rec["tau_hat"] = r.tau_hat;
        rec["mu_hat"] = r.mu_hat;
        rec["theta_hat"] = r.theta_hat;
        rec["subcarrier_rates"] = r.subcarrier_rates;
        rec["sum_rate"] = r.sum_rate;
        rec["sum_rate_predicted"] = r.sum_rate_predicted;
        rec["crlb_trace"] = r.crlb_trace;
        rec["beam_power"] = r.beam_power;
        rec["solve_time_s"] = r.solve_time_s;
        rec["solver_iterations"] = r.solver_iterations;
        rec["infeasible_fallback"] = r.infeasible_fallback;
        rec["non_converged"] = r.non_converged;
        rec["estimation_dropout"] = r.estimation_dropout;
        records.push_back(std::move(rec));
    }
    j["records"] = std::move(records);
    write_file(path, j.dump(1));
}

TrackingLog import_log_json(const std::string& path) {
    const json j = json::parse(read_file(path));
    if (j.at("kind").get<std::string>() != "tracking_log")
        throw std::runtime_error("not a tracking log: " + path);
    TrackingLog log;
    log.scheme = j.at("scheme").get<std::string>();
    log.seed = j.at("seed").get<uint64_t>();
    log.measurement_mode = j.value("measurement_mode", "statistical");
    for (const auto& rec : j.at("records")) {
        TtsRecord r;
        r.tts = rec.at("tts").get<int>();
        r.time = rec.at("time").get<double>();
        r.true_state = vec4_from(rec.at("true_state"));
        r.predicted = vec4_from(rec.at("predicted"));
        r.updated = vec4_from(rec.at("updated"));
        r.tau_hat = rec.at("tau_hat").get<std::vector<double>>();
        r.mu_hat = rec.at("mu_hat").get<std::vector<double>>();
        r.theta_hat = rec.at("theta_hat").get<std::vector<double>>();
        r.subcarrier_rates = rec.at("subcarrier_rates").get<std::vector<double>>();
        r.sum_rate = rec.at("sum_rate").get<double>();
        r.sum_rate_predicted = rec.at("sum_rate_predicted").get<double>();
        r.crlb_trace = rec.at("crlb_trace").get<double>();
        r.beam_power = rec.at("beam_power").get<std::vector<double>>();
        r.solve_time_s = rec.at("solve_time_s").get<double>();
        r.solver_iterations = rec.at("solver_iterations").get<int>();
        r.infeasible_fallback = rec.at("infeasible_fallback").get<bool>();
        r.non_converged = rec.at("non_converged").get<bool>();
        r.estimation_dropout = rec.at("estimation_dropout").get<bool>();
        log.records.push_back(std::move(r));
    }
    return log;
}

void export_csv(const SweepTable& table, const std::string& path) {
    std::ostringstream os;
    os << "axis,value,scheme,seed,peak_rate,avg_rate,min_crlb,avg_crlb,rmse,max_err,"
          "flagged_tts,failed\n";
    os.precision(17);
    for (const auto& c : table.cells)
        os << table.axis << ',' << c.value << ',' << c.scheme << ',' << c.seed << ','
           << c.peak_rate << ',' << c.avg_rate << ',' << c.min_crlb << ',' << c.avg_crlb << ','
           << c.rmse << ',' << c.max_err << ',' << c.flagged_tts << ',' << c.failed << "\n";
    write_file(path, os.str());
}

void export_json(const SweepTable& table, const std::string& path) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = "sweep_table";
    j["axis"] = table.axis;
    json cells = json::array();
    for (const auto& c : table.cells) {
        cells.push_back({{"value", c.value},
                         {"scheme", c.scheme},
                         {"seed", c.seed},
                         {"peak_rate", c.peak_rate},
                         {"avg_rate", c.avg_rate},
                         {"min_crlb", c.min_crlb},
                         {"avg_crlb", c.avg_crlb},
                         {"rmse", c.rmse},
                         {"max_err", c.max_err},
                         {"flagged_tts", c.flagged_tts},
                         {"failed", c.failed}});
    }
    j["cells"] = std::move(cells);
    write_file(path, j.dump(1));
}

SweepTable import_sweep_json(const std::string& path) {
    const json j = json::parse(read_file(path));
    if (j.at("kind").get<std::string>() != "sweep_table")
        throw std::runtime_error("not a sweep table: " + path);
    SweepTable table;
    table.axis = j.at("axis").get<std::string>();
    for (const auto& jc : j.at("cells")) {
        SweepCell c;
        c.value = jc.at("value").get<double>();
        c.scheme = jc.at("scheme").get<std::string>();
        c.seed = jc.at("seed").get<uint64_t>();
        c.peak_rate = jc.at("peak_rate").get<double>();
        c.avg_rate = jc.at("avg_rate").get<double>();
        c.min_crlb = jc.at("min_crlb").get<double>();
        c.avg_crlb = jc.at("avg_crlb").get<double>();
        c.rmse = jc.at("rmse").get<double>();
        c.max_err = jc.at("max_err").get<double>();
        c.flagged_tts = jc.at("flagged_tts").get<int>();
        c.failed = jc.at("failed").get<bool>();
        table.cells.push_back(c);
    }
    return table;
}

void export_csv(const CdfTable& table, const std::string& path) {
    std::ostringstream os;
    os << "scheme,quantile,rate,err_multi,err_single\n";
    os.precision(17);
    for (size_t s = 0; s < table.schemes.size(); ++s)
        for (size_t i = 0; i < table.quantiles.size(); ++i)
            os << table.schemes[s] << ',' << table.quantiles[i] << ',' << table.rate_q[s][i]
               << ',' << table.err_multi_q[s][i] << ',' << table.err_single_q[s][i] << "\n";
    write_file(path, os.str());
}

void export_json(const CdfTable& table, const std::string& path) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = "cdf_table";
    j["quantiles"] = table.quantiles;
    j["schemes"] = table.schemes;
    j["rate_q"] = table.rate_q;
    j["err_multi_q"] = table.err_multi_q;
    j["err_single_q"] = table.err_single_q;
    write_file(path, j.dump(1));
}

void export_svg_lines(const std::string& path, const std::string& title,
                      const std::vector<std::string>& series_names,
                      const std::vector<std::vector<double>>& xs,
                      const std::vector<std::vector<double>>& ys) {
    const int width = 720, height = 480, margin = 60;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (size_t s = 0; s < xs.size(); ++s) {
        for (size_t i = 0; i < xs[s].size(); ++i) {
            xmin = std::min(xmin, xs[s][i]);
            xmax = std::max(xmax, xs[s][i]);
            ymin = std::min(ymin, ys[s][i]);
            ymax = std::max(ymax, ys[s][i]);
        }
    }
    if (!(xmax > xmin)) xmax = xmin + 1.0;
    if (!(ymax > ymin)) ymax = ymin + 1.0;
    const auto px = [&](double x) {
        return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin);
    };
    const auto py = [&](double y) {
        return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin);
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
       << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
       << "</text>\n";
    os << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
       << "' y2='" << height - margin << "' stroke='black'/>\n";
    os << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
       << height - margin << "' stroke='black'/>\n";
    for (size_t s = 0; s < xs.size(); ++s) {
        os << "<polyline fill='none' stroke='" << colors[s % 5] << "' stroke-width='1.5' points='";
        for (size_t i = 0; i < xs[s].size(); ++i)
            os << px(xs[s][i]) << ',' << py(ys[s][i]) << ' ';
        os << "'/>\n";
        os << "<text x='" << width - margin + 4 << "' y='" << margin + 16 * s
           << "' font-size='12' fill='" << colors[s % 5] << "'>" << series_names[s]
           << "</text>\n";
    }
    os << "<text x='" << margin << "' y='" << height - margin + 30 << "' font-size='12'>" << fmt(xmin)
       << "</text>\n";
    os << "<text x='" << width - margin << "' y='" << height - margin + 30
       << "' text-anchor='end' font-size='12'>" << fmt(xmax) << "</text>\n";
    os << "<text x='" << margin - 4 << "' y='" << height - margin
       << "' text-anchor='end' font-size='12'>" << fmt(ymin) << "</text>\n";
    os << "<text x='" << margin - 4 << "' y='" << margin + 8
       << "' text-anchor='end' font-size='12'>" << fmt(ymax) << "</text>\n";
    os << "</svg>\n";
    write_file(path, os.str());
}

} // namespace isac
