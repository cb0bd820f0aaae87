#include "netslic/ratios.hpp"

#include <cmath>
#include <string>

#include <Eigen/SVD>

#include "netslic/errors.hpp"

namespace netslic {

namespace {

constexpr double kMaxCondition = 1e8;

void check_lengths(std::size_t expected, std::size_t got, const char* what) {
    if (got != expected)
        throw InputError(std::string(what) + " has " + std::to_string(got) + " samples, expected " +
                         std::to_string(expected));
}

TlsSolution finish(const Eigen::VectorXcd& v, Eigen::Index m, double smin, double cond) {
    if (std::abs(v[m]) < 1e-14) throw IllConditionedError("total least squares solution is at infinity");
    TlsSolution out;
    out.smallest_singular_value = smin;
    out.condition_number = cond;
    for (Eigen::Index k = 0; k < m; ++k) out.x.push_back(-v[k] / v[m]);
    return out;
}

}  // namespace

Phasor estimate_rho(std::span<const Phasor> v_qp, std::span<const Phasor> v_qs) {
    if (v_qp.size() != v_qs.size()) throw InputError("rho: series lengths differ");
    if (v_qp.size() < kMinHistory) throw InputError("rho: need at least 8 historical samples");
    Phasor num{}, den{};
    for (std::size_t j = 0; j < v_qp.size(); ++j) {
        num += v_qp[j];
        den += v_qs[j];
    }
    if (!is_finite(num) || !is_finite(den)) throw InputError("rho: non-finite samples");
    if (std::abs(den) <= 1e-9) throw NumericDomainError("rho: denominator sum is near zero");
    return num / den;
}

TlsSolution tls_complex(const std::vector<std::vector<Phasor>>& columns, std::span<const Phasor> rhs) {
    const auto n = static_cast<Eigen::Index>(rhs.size());
    const auto m = static_cast<Eigen::Index>(columns.size());
    if (m == 0) throw InputError("TLS needs at least one column");
    Eigen::MatrixXcd C(n, m + 1);
    for (Eigen::Index k = 0; k < m; ++k) {
        check_lengths(rhs.size(), columns[static_cast<std::size_t>(k)].size(), "TLS column");
        for (Eigen::Index t = 0; t < n; ++t) C(t, k) = columns[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)];
    }
    for (Eigen::Index t = 0; t < n; ++t) C(t, m) = rhs[static_cast<std::size_t>(t)];

    Eigen::JacobiSVD<Eigen::MatrixXcd> coef(C.leftCols(m));
    const auto& sa = coef.singularValues();
    const double cond = sa[m - 1] > 0.0 ? sa[0] / sa[m - 1] : INFINITY;

    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(C, Eigen::ComputeThinV);
    const Eigen::VectorXcd v = svd.matrixV().col(m);
    return finish(v, m, svd.singularValues()[m], cond);
}

TlsSolution tls_realified(const std::vector<std::vector<Phasor>>& columns, std::span<const Phasor> rhs) {
    const auto n = static_cast<Eigen::Index>(rhs.size());
    const auto m = static_cast<Eigen::Index>(columns.size());
    if (m == 0) throw InputError("TLS needs at least one column");
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(2 * n, 2 * m + 1);
    for (Eigen::Index k = 0; k < m; ++k) {
        check_lengths(rhs.size(), columns[static_cast<std::size_t>(k)].size(), "TLS column");
        for (Eigen::Index t = 0; t < n; ++t) {
            const Phasor a = columns[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)];
            C(t, k) = a.real();
            C(t, m + k) = -a.imag();
            C(n + t, k) = a.imag();
            C(n + t, m + k) = a.real();
        }
    }
    for (Eigen::Index t = 0; t < n; ++t) {
        C(t, 2 * m) = rhs[static_cast<std::size_t>(t)].real();
        C(n + t, 2 * m) = rhs[static_cast<std::size_t>(t)].imag();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> coef(C.leftCols(2 * m));
    const auto& sa = coef.singularValues();
    const double cond = sa[2 * m - 1] > 0.0 ? sa[0] / sa[2 * m - 1] : INFINITY;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeThinV);
    const Eigen::VectorXd v = svd.matrixV().col(2 * m);
    if (std::abs(v[2 * m]) < 1e-14) throw IllConditionedError("total least squares solution is at infinity");
    TlsSolution out;
    out.smallest_singular_value = svd.singularValues()[2 * m];
    out.condition_number = cond;
    for (Eigen::Index k = 0; k < m; ++k) out.x.push_back(Phasor{-v[k] / v[2 * m], -v[m + k] / v[2 * m]});
    return out;
}

GammaEstimate estimate_gamma(std::span<const Phasor> i_qp, std::span<const Phasor> i_qs,
                             std::span<const Phasor> i_ql, BusId bus,
                             const std::vector<std::vector<Phasor>>& i_others) {
    const std::size_t n = i_qp.size();
    if (n < kMinHistory) throw InputError("gamma: need at least 8 historical samples");
    check_lengths(n, i_qs.size(), "I_qs");
    check_lengths(n, i_ql.size(), "I_qL");
    for (const auto& o : i_others) check_lengths(n, o.size(), "incident line current");

    std::vector<std::vector<Phasor>> cols;
    cols.emplace_back(i_qs.begin(), i_qs.end());
    for (const auto& o : i_others) cols.push_back(o);

    double scale = 0.0;
    for (const auto& c : cols)
        for (Phasor v : c) scale = std::max(scale, std::abs(v));
    for (Phasor v : i_qp) scale = std::max(scale, std::abs(v));
    double load_norm = 0.0;
    for (Phasor v : i_ql) load_norm = std::max(load_norm, std::abs(v));
    // A dead residual channel carries no information; solve without it.
    const bool use_load = load_norm > 1e-12 * std::max(scale, 1.0);
    if (use_load) cols.emplace_back(i_ql.begin(), i_ql.end());

    std::vector<Phasor> rhs(n);
    for (std::size_t t = 0; t < n; ++t) rhs[t] = -i_qp[t];

    TlsSolution sol = tls_complex(cols, rhs);
    if (!(sol.condition_number <= kMaxCondition))
        throw IllConditionedError("current profiles at bus " + std::to_string(bus) +
                                  " are collinear (condition number " + std::to_string(sol.condition_number) +
                                  ")");
    GammaEstimate out;
    out.gamma = sol.x.front();
    for (std::size_t k = 0; k < i_others.size(); ++k) out.gamma_others.push_back(sol.x[1 + k]);
    if (use_load) out.gamma_load = sol.x.back();
    out.smallest_singular_value = sol.smallest_singular_value;
    return out;
}

}  // namespace netslic
