#pragma once

#include "isac/estimator.hpp"

namespace isac {

/// Filtered state estimate with covariance.
struct TrackState {
    Vec4 estimate = Vec4::Zero();
    Mat4 covariance = Mat4::Identity();

    TargetState target() const { return TargetState::from_stacked(estimate); }
};

/// Closed-form partials of one BS's stacked measurement with respect to the
/// state. The delay and matched-filter rows have zero velocity columns.
struct JacobianBlock {
    int bs_index = 0;
    Vec4 dtau;      // dtau/dd
    Vec4 dmu;       // dmu/dd
    VecXc do_dpx;   // d o_m / d p_x, length L K N_r
    VecXc do_dpy;   // d o_m / d p_y

    /// Real stacking for oracle comparisons: complex rows split into
    /// real/imaginary pairs, each carrying the per-component variance.
    MatX realified() const;
};

TrackState predict(const TrackState& track, const MotionModel& model);

/// Jacobians at state d with the given beams; the reflection coefficients
/// are treated as known constants of the measurement map.
std::vector<JacobianBlock> jacobian(const Vec4& d, const ScenarioConfig& cfg,
                                    const BeamformerSet& beams,
                                    const std::vector<cplx>& alphas);

/// Convenience overload evaluating the reflection coefficients from the
/// channel model at d.
std::vector<JacobianBlock> jacobian(const Vec4& d, const ScenarioConfig& cfg,
                                    const BeamformerSet& beams);

/// Multi-BS fusion update in information form:
///   M_n^{-1} = M_{n|n-1}^{-1} + sum_m Re{G_m^H Q_m^{-1} G_m}
/// which is algebraically the textbook gain form since Q_z is diagonal.
TrackState update(const TrackState& track_pred, const std::vector<MeasurementBundle>& bundles,
                  const ScenarioConfig& cfg, const BeamformerSet& beams);

/// Beam-training stand-in: the true state perturbed by the configured
/// initialization noise, covariance set to those variances.
TrackState initialize(const ScenarioConfig& cfg, const TargetState& true_state, uint64_t seed);

} // namespace isac
