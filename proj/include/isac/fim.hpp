#pragma once

#include "isac/waveform.hpp"

namespace isac {

/// Beam-independent pieces of the predicted conditional FIM at one
/// prediction point. The matched-filter quadratic coefficients share one
/// Gram matrix per BS:
///   A_tilde^{i}_m = s^i_m * |alpha_m|^2 omega^2 / r^4 * Adot^H Adot,
/// with s^1 = ly^2, s^2 = -lx ly, s^3 = lx^2, so each BS contributes the
/// scalar gamma_m = sum_k w_k^H gram_m w_k times a fixed 2x2 outer product.
struct QuadraticCoefficients {
    Vec4 d_pred;
    int num_bs = 0;
    int symbols = 0; // L, the l-summation multiplicity

    std::vector<MatXc> gram;           // Adot^H Adot per BS, N_t x N_t, PSD
    std::vector<double> quad_gain;     // sigma_theta^-2 * L * |alpha|^2 omega^2 / r^4
    std::vector<double> sigma_theta2;  // per BS
    std::vector<Vec2> s_dir;           // (ly, -lx) per BS: S_m = s_dir s_dir^T
    std::vector<double> a_bar[3];      // delay/Doppler closed-form constants per BS

    double upsilon[3] = {0.0, 0.0, 0.0}; // sum_m a_bar + prior entries
    Mat2 j_pv = Mat2::Zero();            // beam independent
    Mat2 j_vv = Mat2::Zero();

    /// A_tilde^{n,i} for bs m (i in {1,2,3}): the matched-filter coefficient
    /// matrix before the sigma^-2 weighting and (k, l) summation.
    MatXc a_tilde(int m, int i) const {
        const double s = i == 1   ? s_dir[m](0) * s_dir[m](0)
                         : i == 2 ? s_dir[m](0) * s_dir[m](1)
                                  : s_dir[m](1) * s_dir[m](1);
        const double amp = quad_gain[m] * sigma_theta2[m] / symbols; // |a|^2 w^2 / r^4
        return (s * amp) * gram[m];
    }
};

struct FimBlocks {
    Mat2 j_pp;
    Mat2 j_pv;
    Mat2 j_vv;
    Mat4 assembled() const {
        Mat4 j;
        j.topLeftCorner<2, 2>() = j_pp;
        j.topRightCorner<2, 2>() = j_pv;
        j.bottomLeftCorner<2, 2>() = j_pv.transpose();
        j.bottomRightCorner<2, 2>() = j_vv;
        return j;
    }
};

Mat4 prior_fim(const Mat4& m_pred);

QuadraticCoefficients coefficients(const Vec4& d_pred, const Mat4& m_pred,
                                   const ScenarioConfig& cfg);

/// The quadratic FIM functionals f^i(w) without the upsilon constants:
/// sum_{m,k,l} sigma^-2 Tr(A_tilde^i w w^H).
Eigen::Vector3d quad_terms(const QuadraticCoefficients& coeffs, const BeamformerSet& beams);

FimBlocks fim_blocks(const QuadraticCoefficients& coeffs, const BeamformerSet& beams);

struct PcCrlb {
    Mat2 matrix;
    double trace = 0.0;
};

/// Position PC-CRLB via the Schur complement of the velocity block.
PcCrlb pc_crlb_position(const FimBlocks& blocks);

/// Convenience: trace of the position PC-CRLB for (prediction, beams).
double pc_crlb_trace(const Vec4& d_pred, const Mat4& m_pred, const ScenarioConfig& cfg,
                     const BeamformerSet& beams);

} // namespace isac
