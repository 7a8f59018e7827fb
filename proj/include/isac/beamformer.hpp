#pragma once

#include "isac/conic/solver.hpp"
#include "isac/fim.hpp"

namespace isac {

/// Per-TTS beamforming instance: rank-one rate channels at the prediction
/// plus the FIM quadratic coefficients, all beam-independent.
struct BeamProblem {
    Vec4 d_pred;
    Mat4 m_pred;
    QuadraticCoefficients coeffs;
    std::vector<VecXc> h; // serving-BS channel per subcarrier (H_k = h h^H)
    double sigma_c2 = 0.0;
    std::vector<double> power_budget;
    double eta = 0.0;
    int num_bs = 0;
    int subcarriers = 0;
    int n_tx = 0;
    int serving_bs = 0;
    SdrParams sdr;
    PenaltyParams penalty;

    /// Sum rate of serving-BS beams against the predicted channel.
    double predicted_rate(const BeamformerSet& beams) const;
    /// Trace of the position PC-CRLB for these beams, recomputed from the
    /// coefficients (never read back from a solver).
    double crlb_trace(const BeamformerSet& beams) const;
    bool verify_feasible(const BeamformerSet& beams, double power_slack = 1e-8,
                         double crlb_slack = 1e-6) const;
};

struct SolveDiagnostics {
    std::string status;          ///< optimal | infeasible | non_converged | failed
    double objective = 0.0;      ///< predicted sum rate, bits/s/Hz
    double achieved_crlb = 0.0;  ///< independently recomputed tr(C)
    std::vector<double> power_used;
    int iterations = 0;
    double rank_ratio = 0.0; ///< max lambda2/lambda1 over returned W blocks
    double kappa = 0.0;      ///< final penalty termination indicator
    double wall_time_s = 0.0;
    bool feasible = false;
};

BeamProblem build_problem(const Vec4& d_pred, const Mat4& m_pred, const ScenarioConfig& cfg);

struct SdrResult {
    BeamformerSet beams;
    SolveDiagnostics diag;
    std::vector<std::vector<MatXc>> w_blocks; ///< purified lifted solution per (bs, k)
};

/// Lifted convex relaxation with exponential-cone rate epigraphs and the
/// Schur-complement LMIs; rank-one recovery by constructive reduction on
/// the optimal face, Gaussian randomization as fallback.
SdrResult solve_sdr(const BeamProblem& prob, const conic::Solver& solver);

struct PenaltyResult {
    BeamformerSet beams;
    SolveDiagnostics diag;
    /// (27) objective after every inner pass, grouped per outer iteration.
    std::vector<std::vector<double>> inner_objectives;
};

/// Alternating penalty method: (Omega, q) subproblem as a conic program,
/// beam subproblem through tangent-majorizing surrogates, outer penalty
/// decay rho <- xi rho until the equality indicator kappa passes tol.
PenaltyResult solve_penalty(const BeamProblem& prob, const BeamformerSet& init,
                            const conic::Solver& solver);

struct PenaltyTerms {
    Eigen::Vector3d f;
    double kappa = 0.0;
};

/// f^i(w) = sum sigma^-2 Tr(A_tilde^i w w^H) + upsilon^i and
/// kappa = max_i |f^i - q^i|^2.
PenaltyTerms penalty_terms(const BeamformerSet& beams, const Eigen::Vector3d& q,
                           const QuadraticCoefficients& coeffs);

/// Convex model of one beam subproblem at a fixed anchor: the linearized
/// rate lower bound and a tangent global majorizer of each penalty square.
class SurrogateModel {
public:
    SurrogateModel(const BeamformerSet& anchor, const BeamProblem& prob,
                   const Eigen::Vector3d& q, double rho);

    /// Surrogate objective (27-shaped): g1 + (1/2rho) sum_i g2_i.
    double value(const BeamformerSet& beams) const;
    /// True objective of (27) at the same (q, rho).
    double true_value(const BeamformerSet& beams) const;

    double rate_surrogate(const BeamformerSet& beams) const;    // lower bounds the rate
    double penalty_surrogate(const BeamformerSet& beams) const; // majorizes sum |f-q|^2

    /// Minimizes the surrogate over the per-BS power balls (damped Newton on
    /// a shrinking log-barrier path, warm-started at the anchor).
    BeamformerSet minimize() const;

private:
    friend class SurrogateTestAccess;
    const BeamProblem* prob_;
    BeamformerSet anchor_;
    Eigen::Vector3d q_;
    double rho_;
    // cached anchor quantities
    Eigen::Vector3d upsilon_;
    Eigen::Vector3d q_tilde_;          // upsilon - q
    std::vector<double> gamma_anchor_; // per BS
    double t_hat_[3];                  // T_i at the anchor
};

/// Benchmark beam: sqrt(P/K) a_t(theta_hat) on every subcarrier.
BeamformerSet nonopt_beams(const std::vector<double>& theta_pred, const ScenarioConfig& cfg);

/// Per-subcarrier global phases fixed by making the first significant
/// component real positive (rate is invariant to them).
BeamformerSet canonicalize(BeamformerSet beams);

} // namespace isac
