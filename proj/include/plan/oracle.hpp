#pragma once

#include <functional>
#include <string>
#include <vector>

#include "plan/matrix.hpp"
#include "plan/nn.hpp"
#include "plan/subspace.hpp"

namespace plan {

struct BallMaxResult {
    Matrix eps;
    double value = 0.0;         // <eps, g> of the returned point
    double ascent_value = 0.0;  // best value found by projected ascent alone
    double dual_value = 0.0;    // analytic optimum rho * ||g||_q
};

// Maximizes the flattened inner product <eps, g> over the l_p ball of radius
// rho by projected gradient ascent with random restarts, cross-checked
// against the analytic dual-norm optimum. The returned point is the better
// of the two, so its value is never below the analytic value minus slack.
BallMaxResult ball_max_oracle(const Matrix& g, double rho, NormOrder p, size_t iters = 500,
                              size_t restarts = 8, uint64_t seed = 0);

// Exact projection onto the l_p ball of radius rho (p in {1, 2, inf}).
Matrix project_lp_ball(const Matrix& x, double rho, NormOrder p);

double dual_norm_value(const Matrix& g, double rho, NormOrder p);

enum class ParamSelector { live_b, live_a, head_weight };
enum class LossKind { cross_entropy, squared_error };

// Central finite differences on the selected parameter against the analytic
// gradient. Returns the max relative error over entries whose analytic
// gradient magnitude exceeds 1e-8; entries below the mask are skipped.
double fd_gradient_check(Mlp& model, const Matrix& x, std::span<const int> y, size_t layer,
                         ParamSelector which, double h, LossKind loss = LossKind::cross_entropy);

using EpsilonSolver = std::function<Matrix(const Matrix&, double, NormOrder)>;

struct OracleReport {
    bool pass = true;
    std::vector<std::string> failures;
    // Per p order: worst relative gap of the closed form against the dual
    // value, and the largest relative advantage the ascent oracle ever found.
    struct PerP {
        std::string p;
        double max_rel_gap = 0.0;
        double max_oracle_advantage = 0.0;
        double max_boundary_err = 0.0;
    };
    std::vector<PerP> per_p;
    double fd_max_rel_error = 0.0;
    double fd_quadratic_error = 0.0;
    double orthogonality_err = 0.0;
    bool support_ok = false;
    bool disjoint_ok = false;
};

// Full verification suite: closed form vs oracle over random instances, FD
// gradient checks, and the orthogonality/disjointness/support invariants on
// a small multi-task run. The solver is injectable so the suite itself can
// be exercised against a corrupted implementation.
OracleReport run_verify(const EpsilonSolver& solver = {}, size_t instances_per_p = 200,
                        uint64_t seed = 20240501);

}  // namespace plan
