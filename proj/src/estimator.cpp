#include "isac/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace isac {

namespace {

constexpr uint64_t kMeasStream = 0x4d454153ull;

bool is_pow2(size_t n) { return n && !(n & (n - 1)); }

/// In-place iterative radix-2 FFT, forward sign convention e^{-j2pi k n/N}.
void fft_pow2(std::vector<cplx>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const cplx wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const cplx u = a[i + j];
                const cplx v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

void dft(std::vector<cplx>& a) {
    if (is_pow2(a.size())) {
        fft_pow2(a);
        return;
    }
    const size_t n = a.size();
    std::vector<cplx> out(n, cplx(0.0, 0.0));
    for (size_t q = 0; q < n; ++q) {
        for (size_t i = 0; i < n; ++i) {
            const double ang = -2.0 * kPi * static_cast<double>(q * i) / n;
            out[q] += a[i] * cplx(std::cos(ang), std::sin(ang));
        }
    }
    a = std::move(out);
}

void idft(std::vector<cplx>& a) {
    for (auto& v : a) v = std::conj(v);
    dft(a);
    const double inv = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) v = std::conj(v) * inv;
}

/// Three-point quadratic peak refinement; neighbors wrap around. A
/// symmetric-neighbor dead band keeps exactly-on-grid tones at zero offset
/// instead of letting rounding jitter wrap them across the period.
double parabolic_offset(const std::vector<double>& mag, int peak) {
    const int n = static_cast<int>(mag.size());
    const double m_prev = mag[(peak - 1 + n) % n];
    const double m0 = mag[peak];
    const double m_next = mag[(peak + 1) % n];
    const double denom = m_prev - 2.0 * m0 + m_next;
    if (denom >= 0.0) return 0.0; // flat or degenerate
    if (std::abs(m_prev - m_next) <= 1e-12 * (m_prev + m0 + m_next)) return 0.0;
    return std::clamp(0.5 * (m_prev - m_next) / denom, -0.5, 0.5);
}

double wrap_signed(double f) { // into [-0.5, 0.5)
    f -= std::floor(f + 0.5);
    return f;
}

double wrap_unit(double f) { // into [0, 1)
    f -= std::floor(f);
    return f;
}

} // namespace

AngleEstimate estimate_angle(const EchoFrame& frame, int pad_factor) {
    const int n_rx = static_cast<int>(frame.received.size());
    if (n_rx < 2) throw std::invalid_argument("angle estimation needs N_r >= 2");
    const int K = static_cast<int>(frame.received[0].rows());
    const int L = static_cast<int>(frame.received[0].cols());
    const int n_pad = n_rx * pad_factor;

    std::vector<double> power(n_pad, 0.0);
    std::vector<cplx> buf(n_pad);
    for (int k = 0; k < K; ++k) {
        for (int l = 0; l < L; ++l) {
            std::fill(buf.begin(), buf.end(), cplx(0.0, 0.0));
            for (int i = 0; i < n_rx; ++i) buf[i] = frame.received[i](k, l);
            dft(buf);
            for (int q = 0; q < n_pad; ++q) power[q] += std::norm(buf[q]);
        }
    }

    double total = 0.0;
    for (double p : power) total += p;
    if (total <= 0.0) throw std::domain_error("angle estimation: no peak in all-zero frame");

    std::vector<double> mag(n_pad);
    for (int q = 0; q < n_pad; ++q) mag[q] = std::sqrt(power[q]);
    const int peak =
        static_cast<int>(std::max_element(mag.begin(), mag.end()) - mag.begin());
    const double delta = parabolic_offset(mag, peak);

    // Antenna phase e^{-j i pi cos(theta)} is a tone at normalized frequency
    // -cos(theta)/2, so the peak bin maps back through a sign flip.
    const double freq = wrap_signed((peak + delta) / n_pad);
    AngleEstimate est;
    est.peak_bin = peak;
    est.cos_theta = std::clamp(-2.0 * freq, -1.0, 1.0);
    est.theta = std::acos(est.cos_theta);
    return est;
}

std::vector<MatXc> remove_symbols(const EchoFrame& frame, double theta_hat,
                                  const ScenarioConfig& cfg) {
    const int K = static_cast<int>(frame.received[0].rows());
    const int L = static_cast<int>(frame.received[0].cols());
    const int n_rx = static_cast<int>(frame.received.size());
    const VecXc at = steer_tx(theta_hat, cfg.n_tx);
    const double floor =
        cfg.division_floor_scale * std::sqrt(cfg.power_budget[frame.bs_index] / cfg.subcarriers);

    std::vector<int> null_ks;
    std::vector<cplx> beam_gain(K);
    for (int k = 0; k < K; ++k) {
        beam_gain[k] = at.dot(frame.beams[k]);
        if (std::abs(beam_gain[k]) < floor) null_ks.push_back(k);
    }
    if (!null_ks.empty()) {
        std::ostringstream os;
        os << "symbol removal: beam null below division floor at subcarriers";
        for (int k : null_ks) os << ' ' << k;
        throw std::domain_error(os.str());
    }

    std::vector<MatXc> divided(n_rx, MatXc(K, L));
    for (int i = 0; i < n_rx; ++i)
        for (int k = 0; k < K; ++k)
            for (int l = 0; l < L; ++l)
                divided[i](k, l) = frame.received[i](k, l) / (beam_gain[k] * frame.symbols(k, l));
    return divided;
}

DelayDopplerEstimate estimate_delay_doppler(const std::vector<MatXc>& divided,
                                            const ScenarioConfig& cfg, int pad_factor) {
    const int n_rx = static_cast<int>(divided.size());
    const int K = static_cast<int>(divided[0].rows());
    const int L = static_cast<int>(divided[0].cols());
    const int kp = K * pad_factor;
    const int lp = L * pad_factor;

    MatX power = MatX::Zero(kp, lp);
    for (int i = 0; i < n_rx; ++i) {
        // K-point IDFT down each column (delay), then L-point DFT along each
        // row (Doppler), both zero-padded.
        MatXc stage(kp, L);
        std::vector<cplx> col(kp);
        for (int l = 0; l < L; ++l) {
            std::fill(col.begin(), col.end(), cplx(0.0, 0.0));
            for (int k = 0; k < K; ++k) col[k] = divided[i](k, l);
            idft(col);
            for (int p = 0; p < kp; ++p) stage(p, l) = col[p];
        }
        std::vector<cplx> row(lp);
        for (int p = 0; p < kp; ++p) {
            std::fill(row.begin(), row.end(), cplx(0.0, 0.0));
            for (int l = 0; l < L; ++l) row[l] = stage(p, l);
            dft(row);
            for (int q = 0; q < lp; ++q) power(p, q) += std::norm(row[q]);
        }
    }

    Eigen::Index pi = 0, qi = 0;
    const double peak = power.maxCoeff(&pi, &qi);
    if (peak <= 0.0) throw std::domain_error("delay-Doppler estimation: no peak");

    std::vector<double> delay_slice(kp), doppler_slice(lp);
    for (int p = 0; p < kp; ++p) delay_slice[p] = std::sqrt(power(p, qi));
    for (int q = 0; q < lp; ++q) doppler_slice[q] = std::sqrt(power(pi, q));
    const double dp = parabolic_offset(delay_slice, static_cast<int>(pi));
    const double dq = parabolic_offset(doppler_slice, static_cast<int>(qi));

    DelayDopplerEstimate est;
    est.tau = wrap_unit((static_cast<double>(pi) + dp) / kp) / cfg.delta_f;
    est.mu = wrap_signed((static_cast<double>(qi) + dq) / lp) / cfg.t_sym();
    return est;
}

VecXc matched_filter(const EchoFrame& frame, double tau_hat, double mu_hat,
                     const ScenarioConfig& cfg) {
    const int K = static_cast<int>(frame.received[0].rows());
    const int L = static_cast<int>(frame.received[0].cols());
    const int n_rx = static_cast<int>(frame.received.size());
    const double ts = cfg.t_sym();

    // Frame entries carry the raw antenna phases e^{-j i pi cos}, while the
    // stacked measurement model is written against the normalized receive
    // steering vector; the matched filter folds in the 1/sqrt(N_r).
    const double rescale = 1.0 / std::sqrt(static_cast<double>(n_rx));

    VecXc y(static_cast<Eigen::Index>(K) * L * n_rx);
    for (int k = 0; k < K; ++k) {
        const cplx delay_comp = std::exp(cplx(0.0, 2.0 * kPi * k * cfg.delta_f * tau_hat));
        for (int l = 0; l < L; ++l) {
            const cplx doppler_comp = std::exp(cplx(0.0, -2.0 * kPi * mu_hat * l * ts));
            const cplx comp = rescale * delay_comp * doppler_comp / frame.symbols(k, l);
            const Eigen::Index base = (static_cast<Eigen::Index>(k) * L + l) * n_rx;
            for (int i = 0; i < n_rx; ++i)
                y(base + i) = frame.received[i](k, l) * comp;
        }
    }
    return y;
}

VecXc stacked_measurement_model(const ScenarioConfig& cfg, cplx alpha, double theta,
                                const std::vector<VecXc>& beams_m) {
    const int K = cfg.subcarriers, L = cfg.symbols_per_block, Nr = cfg.n_rx;
    const MatXc a_outer = steering_outer(theta, Nr, cfg.n_tx);
    VecXc o(static_cast<Eigen::Index>(K) * L * Nr);
    for (int k = 0; k < K; ++k) {
        const VecXc ok = alpha * cfg.mf_gain * (a_outer * beams_m[k]);
        for (int l = 0; l < L; ++l)
            o.segment((static_cast<Eigen::Index>(k) * L + l) * Nr, Nr) = ok;
    }
    return o;
}

MeasurementBundle process_frame(const EchoFrame& frame, const ScenarioConfig& cfg,
                                double tau_hint) {
    const int m = frame.bs_index;
    const AngleEstimate ang = estimate_angle(frame, cfg.angle_pad);
    const auto divided = remove_symbols(frame, ang.theta, cfg);
    const auto dd = estimate_delay_doppler(divided, cfg, cfg.delay_doppler_pad);

    MeasurementBundle bundle;
    bundle.bs_index = m;
    bundle.tau_hat = dd.tau;
    bundle.mu_hat = dd.mu;
    // The 2D-DFT resolves the delay modulo 1/delta_f; a track prediction
    // disambiguates the wrap when available.
    if (std::isfinite(tau_hint)) {
        const double period = 1.0 / cfg.delta_f;
        bundle.tau_hat += std::round((tau_hint - bundle.tau_hat) / period) * period;
    }
    bundle.y_tilde = matched_filter(frame, dd.tau, dd.mu, cfg);

    // Least-squares fit of the reflection coefficient against the
    // matched-filter model at the estimated angle.
    const VecXc model = stacked_measurement_model(cfg, cplx(1.0, 0.0), ang.theta, frame.beams);
    const double denom = model.squaredNorm();
    bundle.alpha = denom > 0.0 ? cplx(model.dot(bundle.y_tilde) / denom) : cplx(0.0, 0.0);

    // Honest noise levels for this frame: configured values floored at the
    // refined-bin resolution and at the SNR-limited peak-location accuracy
    // (the block-integrated echo SNR governs how well the 2D peak can be
    // placed; the constant is calibrated against constructed-frame sweeps).
    const double snr_int = std::max(
        std::norm(bundle.alpha) * denom / (0.5 * cfg.rx_noise_power / cfg.n_rx), 1e-12);
    const double peak_loss = 10.0 / std::sqrt(snr_int);
    const double tau_bin = 1.0 / (cfg.delay_doppler_pad * cfg.subcarriers * cfg.delta_f);
    const double mu_bin = 1.0 / (cfg.delay_doppler_pad * cfg.symbols_per_block * cfg.t_sym());
    bundle.sigma_tau =
        std::max(cfg.meas_noise[m].sigma_tau, tau_bin * std::max(0.5, peak_loss));
    bundle.sigma_mu = std::max(cfg.meas_noise[m].sigma_mu, mu_bin * std::max(0.5, peak_loss));
    bundle.sigma_theta2 =
        std::max(cfg.meas_noise[m].sigma_theta2, 0.5 * cfg.rx_noise_power / cfg.n_rx);
    return bundle;
}

std::vector<MeasurementBundle> simulate_measurements(const ScenarioConfig& cfg,
                                                     const TargetState& true_state,
                                                     const BeamformerSet& beams, uint64_t seed) {
    const ChannelSnapshot snap = snapshot(true_state, cfg);
    std::vector<MeasurementBundle> bundles;
    bundles.reserve(cfg.num_bs());
    for (int m = 0; m < cfg.num_bs(); ++m) {
        Rng rng(Rng::derive(seed, kMeasStream, m));
        const MeasNoise& mn = cfg.meas_noise[m];
        MeasurementBundle b;
        b.bs_index = m;
        b.tau_hat = snap.tau[m] + rng.normal(0.0, mn.sigma_tau);
        b.mu_hat = snap.doppler[m] + rng.normal(0.0, mn.sigma_mu);
        b.alpha = snap.reflect_coef[m];
        b.y_tilde = stacked_measurement_model(cfg, b.alpha, snap.angle[m], beams.w[m]);
        for (Eigen::Index i = 0; i < b.y_tilde.size(); ++i)
            b.y_tilde(i) += rng.cnormal(mn.sigma_theta2);
        b.sigma_tau = mn.sigma_tau;
        b.sigma_mu = mn.sigma_mu;
        b.sigma_theta2 = mn.sigma_theta2;
        bundles.push_back(std::move(b));
    }
    return bundles;
}

} // namespace isac
