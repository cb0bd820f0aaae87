#include "netslic/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/SVD>

#include "netslic/errors.hpp"

namespace netslic {

namespace {

using Vec18 = Eigen::Matrix<double, 18, 1>;
using Mat18 = Eigen::Matrix<double, 18, 18>;

/// Residual, gradient and (Gauss-)Newton Hessian of ||D f(psi) - c||^2.
struct BranchTerms {
    Eigen::VectorXd r;
    Psi9 grad;
    Matrix9 hess;
};

Eigen::VectorXd branch_residual(const Psi9& psi, const DesignSystem& sys) {
    return sys.D * theta_from_psi(psi) - sys.c;
}

BranchTerms branch_terms(const Psi9& psi, const DesignSystem& sys, bool exact) {
    BranchTerms t;
    t.r = branch_residual(psi, sys);
    const Jacobian89 jf = jacobian_theta_psi(psi);
    const Eigen::Matrix<double, Eigen::Dynamic, 9> jr = sys.D * jf;
    t.grad = 2.0 * jr.transpose() * t.r;
    t.hess = 2.0 * jr.transpose() * jr;
    if (exact) {
        const ThetaVector dr = sys.D.transpose() * t.r;
        const auto hs = hessians_theta_psi(psi);
        for (int k = 0; k < 8; ++k) t.hess += 2.0 * dr[k] * hs[static_cast<std::size_t>(k)];
    }
    return t;
}

/// ||a||^2 - ||b||^2 evaluated without cancellation between two large sums.
double squared_norm_drop(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).dot(a + b);
}

/// Absolute resolution of ||D f(psi) - c||^2: each residual entry is a
/// difference of O(1) terms and carries a rounding error of a few ulps of them.
double resolution_floor(const Psi9& psi, const DesignSystem& sys, const Eigen::VectorXd& r) {
    const ThetaVector th = theta_from_psi(psi).cwiseAbs();
    const Eigen::VectorXd scale = sys.c.cwiseAbs() + sys.D.cwiseAbs() * th;
    return 8.0 * std::numeric_limits<double>::epsilon() * r.cwiseAbs().dot(scale);
}

std::string history_text(const std::vector<double>& hist) {
    std::ostringstream os;
    os.precision(6);
    os << "[";
    const std::size_t first = hist.size() > 12 ? hist.size() - 12 : 0;
    if (first > 0) os << "..., ";
    for (std::size_t i = first; i < hist.size(); ++i) os << (i > first ? ", " : "") << hist[i];
    os << "]";
    return os.str();
}

/// Factor H + mu I, raising mu until it is positive definite.
template <typename Mat>
Eigen::LLT<Mat> damped_factor(const Mat& H, const std::string& what) {
    const double scale = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
    double mu = 0.0;
    for (int attempt = 0; attempt < 30; ++attempt) {
        Mat Hm = H;
        Hm.diagonal().array() += mu;
        Eigen::LLT<Mat> llt(Hm);
        if (llt.info() == Eigen::Success) {
            // Guard against a factorisation that succeeded on a numerically singular matrix.
            if (llt.matrixLLT().diagonal().minCoeff() > 1e-14 * std::sqrt(scale)) return llt;
        }
        mu = mu == 0.0 ? 1e-12 * scale : mu * 10.0;
    }
    throw ConvergenceError(what + ": Hessian is singular even after damping");
}

}  // namespace

void SolverConfig::validate() const {
    if (!(lambda >= 0.0) || !(lambda1 >= 0.0)) throw InputError("regularization weights must be non-negative");
    if (max_iters < 1) throw InputError("max_iters must be positive");
    if (!(trust_shrink > 0.0 && trust_shrink < 1.0 && trust_grow > 1.0))
        throw InputError("trust region factors need 0 < shrink < 1 < grow");
    if (!(ratio_accept >= 0.0 && ratio_accept < ratio_good && ratio_good <= 1.0))
        throw InputError("trust region ratios need 0 <= accept < good <= 1");
    if (!(trust_radius_init > 0.0)) throw InputError("initial trust radius must be positive");
    if (runs < 1) throw InputError("at least one solver run is required");
    if (window < kMinSamples) throw InputError("window must hold at least 3 instants");
}

RqmSolution solve_rqm_branch(const DesignSystem& sys, const SolverConfig& cfg, const PsiVector& init) {
    cfg.validate();
    init.line().validate();
    if (init.reference_end() != sys.reference_end || !init.branch().same_line(sys.branch))
        throw InputError("RQM initial point does not match the design system");

    const double lambda = cfg.lambda;
    auto regularizer = [](const Psi9& x) {
        return Eigen::Vector2d(x[kRefCurrentRe] - 1.0, x[kRefCurrentIm]);
    };

    Psi9 x = init.values();
    SolveDiagnostics diag;
    Eigen::VectorXd r = branch_residual(x, sys);
    diag.objective_history.push_back(r.squaredNorm() + lambda * regularizer(x).squaredNorm());

    for (int it = 0;; ++it) {
        BranchTerms t = branch_terms(x, sys, cfg.exact_hessian);
        Psi9 g = t.grad;
        Matrix9 H = t.hess;
        g[kRefCurrentRe] += 2.0 * lambda * (x[kRefCurrentRe] - 1.0);
        g[kRefCurrentIm] += 2.0 * lambda * x[kRefCurrentIm];
        H(kRefCurrentRe, kRefCurrentRe) += 2.0 * lambda;
        H(kRefCurrentIm, kRefCurrentIm) += 2.0 * lambda;

        diag.iterations = it;
        diag.grad_norm = g.norm();
        if (diag.grad_norm <= cfg.grad_tol) {
            diag.converged = true;
            diag.stop_reason = "gradient";
            break;
        }
        if (it >= cfg.max_iters) break;

        const Psi9 d = -damped_factor<Matrix9>(H, "RQM Newton").solve(g);
        const double slope = g.dot(d);
        const double floor = resolution_floor(x, sys, r);

        // Backtracking keeps every accepted step a strict decrease.
        double step = 1.0;
        bool accepted = false;
        Psi9 xn;
        Eigen::VectorXd rn;
        for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
            xn = x + step * d;
            rn = branch_residual(xn, sys);
            const double drop =
                squared_norm_drop(r, rn) +
                lambda * squared_norm_drop(regularizer(x), regularizer(xn));
            if (drop > 0.0 && drop >= -1e-4 * step * slope) {
                accepted = true;
                break;
            }
            // Below the objective's resolution the decrease cannot be measured;
            // take the full Newton step when it is predicted to be that small.
            if (ls == 0 && -slope <= floor && drop >= -floor) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // Rounding floor: the Newton step is already below resolution.
            if (d.norm() <= 1e-9 * (1.0 + x.norm())) {
                diag.converged = true;
                diag.stop_reason = "stalled at rounding floor";
                break;
            }
            throw ConvergenceError("RQM Newton line search failed at iteration " + std::to_string(it) +
                                   ", gradient norm " + std::to_string(diag.grad_norm) + ", history " +
                                   history_text(diag.objective_history));
        }
        diag.step_norm = step * d.norm();
        x = xn;
        r = rn;
        diag.objective_history.push_back(r.squaredNorm() + lambda * regularizer(x).squaredNorm());
        if (diag.step_norm <= cfg.step_tol) {
            diag.iterations = it + 1;
            diag.converged = true;
            diag.stop_reason = "step";
            break;
        }
    }
    if (!diag.converged)
        throw ConvergenceError("RQM Newton did not converge in " + std::to_string(cfg.max_iters) +
                               " iterations, gradient norm " + std::to_string(diag.grad_norm) + ", history " +
                               history_text(diag.objective_history));

    diag.objective = diag.objective_history.back();
    PsiVector psi(sys.branch, sys.reference_end, x);
    diag.plausible = std::abs(x[kRefCurrentRe] - 1.0) <= 0.05 && std::abs(x[kRefCurrentIm]) <= 0.05;
    return {psi, diag};
}

int EqualityConstraint::rank() const {
    Eigen::JacobiSVD<Eigen::Matrix<double, 2, 4>> svd(A);
    const auto& s = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < s.size(); ++i)
        if (s[i] > 1e-12) ++rank;
    return rank;
}

double EqualityConstraint::violation(const PsiVector& qp, const PsiVector& qs) const {
    const Eigen::Vector4d xi(qp[kRefCurrentRe], qp[kRefCurrentIm], qs[kRefCurrentRe], qs[kRefCurrentIm]);
    return (A * xi).norm();
}

EqualityConstraint build_equality_constraint(Phasor rho, Phasor gamma) {
    if (!is_finite(rho) || !is_finite(gamma)) throw InputError("constraint ratios must be finite");
    EqualityConstraint c;
    c.A << gamma.real(), -gamma.imag(), -rho.real(), rho.imag(),
           gamma.imag(), gamma.real(), -rho.imag(), -rho.real();
    return c;
}

PairSolution solve_branch_pair(const DesignSystem& d_qp, const DesignSystem& d_qs, const PsiVector& prior_qp,
                               const EqualityConstraint& constraint, const SolverConfig& cfg,
                               const PsiVector& init_qs) {
    cfg.validate();
    const BusId q = d_qp.reference_end;
    if (d_qs.reference_end != q || prior_qp.reference_end() != q || init_qs.reference_end() != q)
        throw InputError("branch pair data must all be referenced at the shared bus");
    if (!prior_qp.branch().same_line(d_qp.branch) || !init_qs.branch().same_line(d_qs.branch))
        throw InputError("branch pair initial points do not match the design systems");
    if (constraint.rank() < 2) throw ConstraintError("equality constraint is rank deficient");

    Eigen::Matrix<double, 2, 18> A = Eigen::Matrix<double, 2, 18>::Zero();
    A.col(kRefCurrentRe) = constraint.A.col(0);
    A.col(kRefCurrentIm) = constraint.A.col(1);
    A.col(9 + kRefCurrentRe) = constraint.A.col(2);
    A.col(9 + kRefCurrentIm) = constraint.A.col(3);

    Eigen::JacobiSVD<Eigen::Matrix<double, 2, 18>> asvd(A, Eigen::ComputeFullV);
    const Eigen::Matrix<double, 18, 16> Z = asvd.matrixV().rightCols(16);

    const double lambda1 = cfg.lambda1;
    const Psi9 prior = prior_qp.values();

    Vec18 x;
    x << prior_qp.values(), init_qs.values();
    // Project the start onto the constraint surface.
    x -= A.transpose() * (A * A.transpose()).ldlt().solve(A * x);

    auto residuals = [&](const Vec18& v, Eigen::VectorXd& r1, Eigen::VectorXd& r2, Psi9& reg) {
        r1 = branch_residual(v.head<9>(), d_qp);
        r2 = branch_residual(v.tail<9>(), d_qs);
        reg = v.head<9>() - prior;
    };
    auto objective = [&](const Eigen::VectorXd& r1, const Eigen::VectorXd& r2, const Psi9& reg) {
        return r1.squaredNorm() + r2.squaredNorm() + lambda1 * reg.squaredNorm();
    };

    Eigen::VectorXd r1, r2;
    Psi9 reg;
    residuals(x, r1, r2, reg);
    SolveDiagnostics diag;
    diag.objective_history.push_back(objective(r1, r2, reg));

    double radius = cfg.trust_radius_init;
    int it = 0;
    for (;; ++it) {
        const BranchTerms t1 = branch_terms(x.head<9>(), d_qp, cfg.exact_hessian);
        const BranchTerms t2 = branch_terms(x.tail<9>(), d_qs, cfg.exact_hessian);
        Vec18 g;
        g << t1.grad + 2.0 * lambda1 * reg, t2.grad;
        Mat18 H = Mat18::Zero();
        H.topLeftCorner<9, 9>() = t1.hess;
        H.topLeftCorner<9, 9>().diagonal().array() += 2.0 * lambda1;
        H.bottomRightCorner<9, 9>() = t2.hess;

        diag.iterations = it;
        diag.grad_norm = (Z.transpose() * g).norm();
        if (diag.grad_norm <= cfg.grad_tol) {
            diag.converged = true;
            diag.stop_reason = "projected gradient";
            break;
        }
        if (it >= cfg.max_iters) break;

        // Damp the Hessian until the reduced model is convex, then solve the KKT system.
        const Eigen::Matrix<double, 16, 16> reduced = Z.transpose() * H * Z;
        const double scale = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
        double mu = 0.0;
        for (int attempt = 0;; ++attempt) {
            Eigen::Matrix<double, 16, 16> rm = reduced;
            rm.diagonal().array() += mu;
            Eigen::LLT<Eigen::Matrix<double, 16, 16>> llt(rm);
            if (llt.info() == Eigen::Success &&
                llt.matrixLLT().diagonal().minCoeff() > 1e-14 * std::sqrt(scale))
                break;
            if (attempt >= 30) throw ConvergenceError("branch pair: reduced Hessian singular after damping");
            mu = mu == 0.0 ? 1e-12 * scale : mu * 10.0;
        }
        Mat18 Hm = H;
        Hm.diagonal().array() += mu;
        Eigen::Matrix<double, 20, 20> K = Eigen::Matrix<double, 20, 20>::Zero();
        K.topLeftCorner<18, 18>() = Hm;
        K.topRightCorner<18, 2>() = A.transpose();
        K.bottomLeftCorner<2, 18>() = A;
        Eigen::Matrix<double, 20, 1> rhs;
        rhs << -g, -(A * x);
        const Eigen::Matrix<double, 20, 1> sol = K.fullPivLu().solve(rhs);
        Vec18 d = sol.head<18>();

        const double dn = d.norm();
        if (dn > radius) d *= radius / dn;
        const double predicted = -(g.dot(d) + 0.5 * d.dot(Hm * d));

        const Vec18 xn = x + d;
        Eigen::VectorXd n1, n2;
        Psi9 nreg;
        residuals(xn, n1, n2, nreg);
        const double actual =
            squared_norm_drop(r1, n1) + squared_norm_drop(r2, n2) + lambda1 * squared_norm_drop(reg, nreg);
        double ratio = predicted > 0.0 ? actual / predicted : -1.0;
        const double floor = resolution_floor(x.head<9>(), d_qp, r1) + resolution_floor(x.tail<9>(), d_qs, r2);
        // An untruncated step whose predicted decrease is below the objective's
        // resolution is accepted on the model's word.
        if (dn <= radius && predicted <= floor && actual >= -floor) ratio = 1.0;

        if (ratio >= cfg.ratio_accept && (actual > 0.0 || ratio == 1.0)) {
            x = xn;
            r1 = std::move(n1);
            r2 = std::move(n2);
            reg = nreg;
            diag.step_norm = d.norm();
            diag.objective_history.push_back(objective(r1, r2, reg));
            if (ratio > cfg.ratio_good && d.norm() >= 0.99 * radius) radius = std::min(radius * cfg.trust_grow, 1e6);
            if (diag.step_norm <= cfg.step_tol) {
                diag.iterations = it + 1;
                diag.converged = true;
                diag.stop_reason = "step";
                break;
            }
        } else {
            radius = cfg.trust_shrink * std::min(radius, d.norm());
            if (radius < 1e-14) {
                // A step this small that still cannot decrease the objective
                // means the model is exhausted at rounding level.
                if (sol.head<18>().norm() <= 1e-9 * (1.0 + x.norm())) {
                    diag.converged = true;
                    diag.stop_reason = "stalled at rounding floor";
                    break;
                }
                throw ConvergenceError("branch pair trust radius collapsed at iteration " + std::to_string(it) +
                                       ", projected gradient " + std::to_string(diag.grad_norm) + ", history " +
                                       history_text(diag.objective_history));
            }
        }
    }
    if (!diag.converged)
        throw ConvergenceError("branch pair did not converge in " + std::to_string(cfg.max_iters) +
                               " iterations, projected gradient " + std::to_string(diag.grad_norm) +
                               ", history " + history_text(diag.objective_history));

    diag.objective = diag.objective_history.back();
    diag.constraint_violation = (A * x).norm();
    PairSolution out{PsiVector(d_qp.branch, q, x.head<9>()), PsiVector(d_qs.branch, q, x.tail<9>()), diag};
    return out;
}

RqmCorrection reconstruct_rqm_cfs(std::span<const PsiVector> runs) {
    if (runs.empty()) throw PipelineError("RQM reconstruction needs at least one solved run");
    RqmCorrection out{Phasor{}, Phasor{}, Phasor{}};
    for (const auto& p : runs) {
        out.alpha_far += p.far_voltage_ratio();
        out.beta_ref += p.ref_current_ratio();
        out.beta_far += p.far_current_ratio();
    }
    const double m = static_cast<double>(runs.size());
    out.alpha_far /= m;
    out.beta_ref /= m;
    out.beta_far /= m;
    return out;
}

Phasor compute_lambda_chain(const std::vector<std::vector<Phasor>>& hop_ratios, std::span<const Phasor> rhos,
                            std::size_t runs) {
    if (runs == 0) throw PipelineError("Lambda chain needs at least one run");
    if (rhos.size() != hop_ratios.size())
        throw PipelineError("Lambda chain: " + std::to_string(hop_ratios.size()) + " lines on the path but " +
                            std::to_string(rhos.size()) + " bus ratios");
    for (std::size_t h = 0; h < hop_ratios.size(); ++h)
        if (hop_ratios[h].size() < runs)
            throw PipelineError("Lambda chain: line " + std::to_string(h) + " has only " +
                                std::to_string(hop_ratios[h].size()) + " of " + std::to_string(runs) +
                                " run estimates");
    Phasor sum{};
    for (std::size_t j = 0; j < runs; ++j) {
        Phasor prod{1.0, 0.0};
        for (std::size_t h = 0; h < hop_ratios.size(); ++h) prod *= rhos[h] * hop_ratios[h][j];
        sum += prod;
    }
    return sum / static_cast<double>(runs);
}

CorrectionFactors reconstruct_branch_cfs(Phasor lambda, const BranchId& branch, BusId reference_end,
                                         Phasor far_voltage, Phasor ref_current, Phasor far_current) {
    if (!branch.touches(reference_end))
        throw TopologyError("bus " + std::to_string(reference_end) + " is not an end of " + to_string(branch));
    const Phasor a_ref = lambda;
    const Phasor a_far = lambda * far_voltage;
    const Phasor b_ref = lambda * ref_current;
    const Phasor b_far = lambda * far_current;
    if (reference_end == branch.from) return {a_ref, a_far, b_ref, b_far};
    return {a_far, a_ref, b_far, b_ref};
}

}  // namespace netslic
