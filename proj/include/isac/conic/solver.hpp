#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>
#include <vector>

namespace isac::conic {

/// Cone memberships the solver understands. `exp` is the exponential cone
/// cl{(x, y, z) : y > 0, y e^{x/y} <= z}; `psd` blocks are real symmetric
/// matrices in scaled-vec packing (lower triangle, column major, off-diagonal
/// entries times sqrt(2)).
enum class ConeType { free_vars, nonneg, soc, psd, exp_cone };

struct ConeBlock {
    ConeType type;
    int offset = 0; ///< first variable index
    int dim = 0;    ///< number of variables
    int side = 0;   ///< psd only: matrix side
};

/// Conic program in standard form:
///   minimize    c^T x
///   subject to  A x = b,  x in K1 x K2 x ...
///
/// Assemble variables block by block, then add equality rows.
class Problem {
public:
    int add_free(int n) { return add_block(ConeType::free_vars, n, 0); }
    int add_nonneg(int n) { return add_block(ConeType::nonneg, n, 0); }
    int add_soc(int n) { return add_block(ConeType::soc, n, 0); }
    int add_psd(int side) { return add_block(ConeType::psd, side * (side + 1) / 2, side); }
    int add_exp() { return add_block(ConeType::exp_cone, 3, 0); }

    int add_row(double rhs) {
        b_.push_back(rhs);
        return static_cast<int>(b_.size()) - 1;
    }
    void set_entry(int row, int col, double value) {
        if (value != 0.0) triplets_.emplace_back(row, col, value);
    }
    void set_objective(int col, double value) { obj_.emplace_back(col, value); }

    int num_vars() const { return n_; }
    int num_rows() const { return static_cast<int>(b_.size()); }
    const std::vector<ConeBlock>& blocks() const { return blocks_; }

    // scaled-vec helpers for psd blocks
    static int svec_dim(int side) { return side * (side + 1) / 2; }
    static int svec_index(int i, int j, int side); // i >= j
    static Eigen::VectorXd svec(const Eigen::MatrixXd& m);
    static Eigen::MatrixXd smat(const Eigen::VectorXd& v, int side);

    friend class Solver;

private:
    int add_block(ConeType t, int dim, int side) {
        blocks_.push_back({t, n_, dim, side});
        n_ += dim;
        return blocks_.back().offset;
    }

    int n_ = 0;
    std::vector<ConeBlock> blocks_;
    std::vector<Eigen::Triplet<double>> triplets_;
    std::vector<std::pair<int, double>> obj_;
    std::vector<double> b_;
};

enum class SolveStatus { optimal, infeasible, numerical_failure };

struct Solution {
    SolveStatus status = SolveStatus::numerical_failure;
    Eigen::VectorXd x; ///< primal point (already de-homogenized)
    Eigen::VectorXd y;
    Eigen::VectorXd s;
    double objective = 0.0;
    int iterations = 0;
    double gap = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    std::string detail;
};

struct SolverOptions {
    double eps_feas = 1e-9;
    double eps_gap = 1e-9;
    double eps_infeas = 1e-10;
    int max_iterations = 400;
    int max_correctors = 8;
    double beta_center = 0.25; ///< proximity after correction
    double beta_wide = 0.75;   ///< proximity allowed after a predictor step
    bool verbose = false;
};

/// Homogeneous self-dual path-following method using primal cone barriers
/// (predictor steps with centering correctors). Handles infeasible starts
/// and produces infeasibility certificates.
class Solver {
public:
    explicit Solver(SolverOptions opts = {}) : opts_(opts) {}
    Solution solve(const Problem& prob) const;

private:
    SolverOptions opts_;
};

} // namespace isac::conic
