#include "netslic/formulation.hpp"

#include <cmath>
#include <complex>

#include "netslic/errors.hpp"

namespace netslic {

namespace {

using cd = std::complex<double>;
constexpr cd kJ{0.0, 1.0};

// theta is built from four holomorphic functions of the complex unknowns
// Z = psi1 + j psi2, A = psi4 + j psi5, P = psi6 + j psi7, Q = psi8 + j psi9
// and the real unknown b = psi3. Derivatives are taken in these variables
// and mapped to real coordinates: d/d(Re v) = g_v, d/d(Im v) = j g_v.
enum Var { kZ = 0, kB, kA, kP, kQ, kVarCount };
constexpr int kReIndex[kVarCount] = {0, 2, 3, 5, 7};
constexpr int kImIndex[kVarCount] = {1, -1, 4, 6, 8};

struct Derivs {
    cd value[4];
    cd first[4][kVarCount]{};
    cd second[4][kVarCount][kVarCount]{};
};

Derivs evaluate(const Psi9& p, bool want_second) {
    const cd Z{p[0], p[1]};
    const double b = p[2];
    const cd A{p[3], p[4]};
    const cd P{p[5], p[6]};
    const cd Q{p[7], p[8]};

    const cd w = 1.0 + kJ * b * Z;
    const cd w_Z = kJ * b;
    const cd w_B = kJ * Z;
    const cd w_ZB = kJ;

    const cd h = Z * w;
    const cd h_Z = w + Z * w_Z;
    const cd h_B = Z * w_B;

    Derivs d;
    d.value[0] = w * w;
    d.value[1] = w * A;
    d.value[2] = h * P;
    d.value[3] = Z * Q;

    d.first[0][kZ] = 2.0 * w * w_Z;
    d.first[0][kB] = 2.0 * w * w_B;

    d.first[1][kZ] = w_Z * A;
    d.first[1][kB] = w_B * A;
    d.first[1][kA] = w;

    d.first[2][kZ] = h_Z * P;
    d.first[2][kB] = h_B * P;
    d.first[2][kP] = h;

    d.first[3][kZ] = Q;
    d.first[3][kQ] = Z;

    if (want_second) {
        auto set = [&d](int k, Var u, Var v, cd val) {
            d.second[k][u][v] = val;
            d.second[k][v][u] = val;
        };
        const cd h_ZZ = 2.0 * w_Z;
        const cd h_ZB = w_B + Z * w_ZB;
        const cd h_BB = 0.0;

        set(0, kZ, kZ, 2.0 * w_Z * w_Z);
        set(0, kB, kB, 2.0 * w_B * w_B);
        set(0, kZ, kB, 2.0 * (w_B * w_Z + w * w_ZB));

        set(1, kZ, kB, w_ZB * A);
        set(1, kZ, kA, w_Z);
        set(1, kB, kA, w_B);

        set(2, kZ, kZ, h_ZZ * P);
        set(2, kZ, kB, h_ZB * P);
        set(2, kB, kB, h_BB * P);
        set(2, kZ, kP, h_Z);
        set(2, kB, kP, h_B);

        set(3, kZ, kQ, 1.0);
    }
    return d;
}

}  // namespace

DesignSystem build_design_system(const BranchMeasurements& m, BusId reference_end) {
    m.validate();
    const BranchMeasurements o = m.oriented_from(reference_end);
    const auto n = static_cast<Eigen::Index>(o.size());
    DesignSystem sys;
    sys.branch = m.branch;
    sys.reference_end = reference_end;
    sys.D = Eigen::MatrixXd::Zero(4 * n, 8);
    sys.c = Eigen::VectorXd::Zero(4 * n);
    for (Eigen::Index t = 0; t < n; ++t) {
        const auto& s = o.samples[static_cast<std::size_t>(t)];
        const double vpr = s.v_from.real(), vpi = s.v_from.imag();
        const double vqr = s.v_to.real(), vqi = s.v_to.imag();
        const double ipr = s.i_from.real(), ipi = s.i_from.imag();
        const double iqr = s.i_to.real(), iqi = s.i_to.imag();
        const Eigen::Index r = 4 * t;
        sys.D.row(r) << vpr, -vpi, -vqr, vqi, -ipr, ipi, 0.0, 0.0;
        sys.D.row(r + 1) << 0.0, 0.0, vqr, -vqi, 0.0, 0.0, -iqr, iqi;
        sys.D.row(r + 2) << vpi, vpr, -vqi, -vqr, -ipi, -ipr, 0.0, 0.0;
        sys.D.row(r + 3) << 0.0, 0.0, vqi, vqr, 0.0, 0.0, -iqi, -iqr;
        sys.c[r + 1] = vpr;
        sys.c[r + 3] = vpi;
    }
    return sys;
}

ThetaVector theta_from_psi(const Psi9& p) {
    const double p1 = p[0], p2 = p[1], p3 = p[2], p4 = p[3], p5 = p[4];
    const double p6 = p[5], p7 = p[6], p8 = p[7], p9 = p[8];
    ThetaVector t;
    t[0] = 1.0 - 2.0 * p2 * p3 + p2 * p2 * p3 * p3 - p1 * p1 * p3 * p3;
    t[1] = 2.0 * p1 * p3 - 2.0 * p1 * p2 * p3 * p3;
    t[2] = p4 - p2 * p3 * p4 - p1 * p3 * p5;
    t[3] = p5 - p2 * p3 * p5 + p1 * p3 * p4;
    t[4] = p1 * p6 - 2.0 * p1 * p2 * p3 * p6 - p1 * p1 * p3 * p7 - p2 * p7 + p2 * p2 * p3 * p7;
    t[5] = p1 * p7 - 2.0 * p1 * p2 * p3 * p7 + p1 * p1 * p3 * p6 + p2 * p6 - p2 * p2 * p3 * p6;
    t[6] = p1 * p8 - p2 * p9;
    t[7] = p1 * p9 + p2 * p8;
    return t;
}

Jacobian89 jacobian_theta_psi(const Psi9& psi) {
    const Derivs d = evaluate(psi, false);
    Jacobian89 J = Jacobian89::Zero();
    for (int k = 0; k < 4; ++k) {
        for (int v = 0; v < kVarCount; ++v) {
            const cd g = d.first[k][v];
            J(2 * k, kReIndex[v]) = g.real();
            J(2 * k + 1, kReIndex[v]) = g.imag();
            if (kImIndex[v] >= 0) {
                const cd gi = kJ * g;
                J(2 * k, kImIndex[v]) = gi.real();
                J(2 * k + 1, kImIndex[v]) = gi.imag();
            }
        }
    }
    return J;
}

std::array<Matrix9, 8> hessians_theta_psi(const Psi9& psi) {
    const Derivs d = evaluate(psi, true);
    std::array<Matrix9, 8> H;
    for (auto& h : H) h.setZero();
    for (int k = 0; k < 4; ++k) {
        for (int u = 0; u < kVarCount; ++u) {
            for (int v = 0; v < kVarCount; ++v) {
                const cd g = d.second[k][u][v];
                if (g == cd{}) continue;
                const int ui[2] = {kReIndex[u], kImIndex[u]};
                const int vi[2] = {kReIndex[v], kImIndex[v]};
                const cd dir[2] = {1.0, kJ};
                for (int a = 0; a < 2; ++a) {
                    if (ui[a] < 0) continue;
                    for (int c = 0; c < 2; ++c) {
                        if (vi[c] < 0) continue;
                        const cd val = g * dir[a] * dir[c];
                        H[static_cast<std::size_t>(2 * k)](ui[a], vi[c]) = val.real();
                        H[static_cast<std::size_t>(2 * k + 1)](ui[a], vi[c]) = val.imag();
                    }
                }
            }
        }
    }
    return H;
}

PsiVector swap_reference(const PsiVector& psi) {
    const cd far = psi.far_voltage_ratio();
    if (std::abs(far) <= 1e-6)
        throw NumericDomainError("cannot swap reference of " + to_string(psi.branch()) +
                                 ": far-end voltage ratio is near zero");
    const cd inv = 1.0 / far;
    // The old reference-end CT becomes the far CT and vice versa.
    return PsiVector::from_parts(psi.branch(), psi.far_end(), psi.line(), inv, psi.far_current_ratio() * inv,
                                 psi.ref_current_ratio() * inv);
}

PsiVector referenced_at(const PsiVector& psi, BusId bus) {
    if (!psi.branch().touches(bus))
        throw TopologyError("bus " + std::to_string(bus) + " is not an end of " + to_string(psi.branch()));
    return bus == psi.reference_end() ? psi : swap_reference(psi);
}

Eigen::VectorXd residual(const Psi9& psi, const DesignSystem& sys) {
    return sys.D * theta_from_psi(psi) - sys.c;
}

double rqm_objective(const Psi9& psi, const DesignSystem& sys, double lambda) {
    const double reg = (psi[kRefCurrentRe] - 1.0) * (psi[kRefCurrentRe] - 1.0) +
                       psi[kRefCurrentIm] * psi[kRefCurrentIm];
    return residual(psi, sys).squaredNorm() + lambda * reg;
}

Psi9 rqm_gradient(const Psi9& psi, const DesignSystem& sys, double lambda) {
    const Eigen::VectorXd r = residual(psi, sys);
    Psi9 g = 2.0 * jacobian_theta_psi(psi).transpose() * (sys.D.transpose() * r);
    g[kRefCurrentRe] += 2.0 * lambda * (psi[kRefCurrentRe] - 1.0);
    g[kRefCurrentIm] += 2.0 * lambda * psi[kRefCurrentIm];
    return g;
}

}  // namespace netslic
