#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netslic/formulation.hpp"
#include "netslic/model.hpp"

namespace netslic {

struct SolverConfig {
    /// Weight pulling the RQM branch's reference CT ratio toward 1.
    double lambda = 0.1;
    /// Weight tying a branch pair's first line to its previous estimate.
    double lambda1 = 0.1;
    int max_iters = 100;
    double grad_tol = 1e-9;
    double step_tol = 1e-12;
    double trust_radius_init = 1.0;
    double trust_shrink = 0.25;
    double trust_grow = 2.0;
    double ratio_accept = 0.1;
    double ratio_good = 0.75;
    /// Solver runs averaged during correction-factor reconstruction.
    std::size_t runs = 10;
    /// Instants per run; run j uses samples [j*window, (j+1)*window).
    std::size_t window = 60;
    /// Add the second-order residual terms to the Gauss-Newton Hessian.
    bool exact_hessian = false;

    void validate() const;
};

struct SolveDiagnostics {
    int iterations = 0;
    double grad_norm = 0.0;
    double step_norm = 0.0;
    double constraint_violation = 0.0;
    double objective = 0.0;
    bool converged = false;
    /// RQM only: reference CT ratio within 0.05 of 1.
    bool plausible = true;
    std::string stop_reason;
    /// Objective after each accepted step, starting with the initial point.
    std::vector<double> objective_history;
};

struct RqmSolution {
    PsiVector psi;
    SolveDiagnostics diag;
};

/// Damped Newton on the regularized objective of the RQM branch. Throws
/// ConvergenceError (with the iterate history in the message) when neither
/// the gradient nor the step tolerance is met within max_iters.
RqmSolution solve_rqm_branch(const DesignSystem& sys, const SolverConfig& cfg, const PsiVector& init);

/// Linear coupling A [psi_qp(6), psi_qp(7), psi_qs(6), psi_qs(7)]^T = 0 of the
/// reference CT ratios of two lines meeting at bus q.
struct EqualityConstraint {
    Eigen::Matrix<double, 2, 4> A = Eigen::Matrix<double, 2, 4>::Zero();

    int rank() const;
    double violation(const PsiVector& qp, const PsiVector& qs) const;
};

EqualityConstraint build_equality_constraint(Phasor rho_hat, Phasor gamma_hat);

struct PairSolution {
    PsiVector qp;
    PsiVector qs;
    SolveDiagnostics diag;
};

/// Equality-constrained trust-region Newton on
///   ||D_qp f(psi_qp) - c_qp||^2 + ||D_qs f(psi_qs) - c_qs||^2 + lambda1 ||psi_qp - prior||^2
/// subject to the constraint. Both systems and the prior must be referenced
/// at the shared bus. Every accepted iterate is feasible.
PairSolution solve_branch_pair(const DesignSystem& d_qp, const DesignSystem& d_qs, const PsiVector& prior_qp,
                               const EqualityConstraint& constraint, const SolverConfig& cfg,
                               const PsiVector& init_qs);

/// Averaged correction-factor ratios of the RQM branch, read as correction
/// factors because the reference VT is the RQM.
struct RqmCorrection {
    Phasor alpha_far{1.0, 0.0};
    Phasor beta_ref{1.0, 0.0};
    Phasor beta_far{1.0, 0.0};
};

RqmCorrection reconstruct_rqm_cfs(std::span<const PsiVector> runs);

/// Mean over runs of the telescoping product
///   prod_h rho[h] * hop_ratios[h][run]
/// where hop_ratios[h][run] is alpha(exit)/alpha(entry) of the h-th line on
/// the path (target excluded) and rho[h] the VT ratio at the bus joining line
/// h to line h+1. Throws PipelineError when an estimate is missing.
Phasor compute_lambda_chain(const std::vector<std::vector<Phasor>>& hop_ratios, std::span<const Phasor> rhos,
                            std::size_t runs);

/// alpha_ref = Lambda and the remaining factors Lambda times the ratios,
/// returned in the orientation of `branch`.
CorrectionFactors reconstruct_branch_cfs(Phasor lambda, const BranchId& branch, BusId reference_end,
                                         Phasor far_voltage, Phasor ref_current, Phasor far_current);

}  // namespace netslic
