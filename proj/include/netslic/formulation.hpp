#pragma once

#include <array>

#include <Eigen/Dense>

#include "netslic/model.hpp"

namespace netslic {

using Jacobian89 = Eigen::Matrix<double, 8, 9>;
using Matrix9 = Eigen::Matrix<double, 9, 9>;

/// Linear-in-theta system D * theta = c of one branch. Each instant adds four
/// rows: Re(first), Re(second), Im(first), Im(second) of the two line
/// equations written relative to the reference-end VT.
struct DesignSystem {
    Eigen::MatrixXd D;
    Eigen::VectorXd c;
    BranchId branch;
    BusId reference_end = 0;

    Eigen::Index instants() const { return D.rows() / 4; }
};

/// Rows are filled from `m` with `reference_end` playing the from role;
/// when it is the to bus the two ends' channels are exchanged first.
DesignSystem build_design_system(const BranchMeasurements& m, BusId reference_end);

/// Polynomial map from the nine physical unknowns to the eight linear
/// coefficients. With z = psi1 + j psi2, w = 1 + j psi3 z:
///   theta1 + j theta2 = w^2
///   theta3 + j theta4 = w (psi4 + j psi5)
///   theta5 + j theta6 = z w (psi6 + j psi7)
///   theta7 + j theta8 = z (psi8 + j psi9)
ThetaVector theta_from_psi(const Psi9& psi);
inline ThetaVector theta_from_psi(const PsiVector& psi) { return theta_from_psi(psi.values()); }

Jacobian89 jacobian_theta_psi(const Psi9& psi);
inline Jacobian89 jacobian_theta_psi(const PsiVector& psi) { return jacobian_theta_psi(psi.values()); }

/// Second derivatives of each theta component with respect to psi.
std::array<Matrix9, 8> hessians_theta_psi(const Psi9& psi);

/// Re-express the ratios relative to the VT at the other end of the line.
/// Throws NumericDomainError when |psi4 + j psi5| <= 1e-6.
PsiVector swap_reference(const PsiVector& psi);

/// `psi` expressed with its reference at `bus` (swapped if needed).
PsiVector referenced_at(const PsiVector& psi, BusId bus);

Eigen::VectorXd residual(const Psi9& psi, const DesignSystem& sys);

/// ||D f(psi) - c||^2 + lambda * ((psi6 - 1)^2 + psi7^2).
double rqm_objective(const Psi9& psi, const DesignSystem& sys, double lambda);
inline double rqm_objective(const PsiVector& psi, const DesignSystem& sys, double lambda) {
    return rqm_objective(psi.values(), sys, lambda);
}

/// Exact gradient of rqm_objective.
Psi9 rqm_gradient(const Psi9& psi, const DesignSystem& sys, double lambda);

}  // namespace netslic
