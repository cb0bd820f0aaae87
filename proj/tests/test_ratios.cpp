#include <doctest.h>

#include <random>

#include "netslic/errors.hpp"
#include "netslic/networks.hpp"
#include "netslic/ratios.hpp"
#include "netslic/synthgen.hpp"

using namespace netslic;

namespace {

const Dataset& true_builtin() {
    static const Dataset d = [] {
        const NetworkSpec net = builtin_network();
        Rng rng(21);
        return true_tree_data(net, generate_true_series(net, LoadScenario{}, rng));
    }();
    return d;
}

struct BusSeries {
    std::vector<Phasor> qp, qs, ql;
};

// Currents into bus 8 from lines (8,30) and (8,9) plus the residual.
BusSeries bus8() {
    const BusCurrentSet& s = true_builtin().bus_currents(8);
    BusSeries out;
    for (std::size_t j = 0; j < s.branches.size(); ++j) {
        if (s.branches[j].same_line({8, 30})) out.qp = s.branch_currents[j];
        if (s.branches[j].same_line({8, 9})) out.qs = s.branch_currents[j];
    }
    out.ql = s.residual_current;
    return out;
}

std::vector<Phasor> noisy(const std::vector<Phasor>& x, double tve, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    const double k = tve / (3.0 * std::sqrt(2.0));
    std::vector<Phasor> out;
    for (Phasor v : x) out.push_back(v + k * std::abs(v) * Phasor{g(rng), g(rng)});
    return out;
}

// Ordinary least squares by normal equations, an oracle independent of the TLS code.
std::vector<Phasor> ols(const std::vector<std::vector<Phasor>>& cols, const std::vector<Phasor>& rhs,
                        double* residual_norm = nullptr) {
    const auto n = static_cast<Eigen::Index>(rhs.size());
    const auto m = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXcd A(n, m);
    Eigen::VectorXcd b(n);
    for (Eigen::Index t = 0; t < n; ++t) {
        for (Eigen::Index j = 0; j < m; ++j) A(t, j) = cols[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)];
        b[t] = rhs[static_cast<std::size_t>(t)];
    }
    const Eigen::VectorXcd x = (A.adjoint() * A).ldlt().solve(A.adjoint() * b);
    if (residual_norm) *residual_norm = (A * x - b).norm();
    return {x.data(), x.data() + m};
}

}  // namespace

TEST_CASE("rho of identical and scaled series") {
    std::vector<Phasor> v;
    for (int k = 0; k < 10; ++k) v.push_back(std::polar(1.0 + 0.01 * k, 0.02 * k));
    CHECK(estimate_rho(v, v) == Phasor{1.0, 0.0});
    std::vector<Phasor> scaled;
    for (Phasor z : v) scaled.push_back(z / 0.98);
    CHECK(std::abs(estimate_rho(v, scaled) - 0.98) < 1e-15);
}

TEST_CASE("rho is scale-equivariant") {
    std::vector<Phasor> a, b;
    for (int k = 0; k < 12; ++k) {
        a.push_back(std::polar(1.0, 0.1 * k));
        b.push_back(std::polar(1.01, 0.1 * k + 0.001));
    }
    const Phasor r = estimate_rho(a, b);
    std::vector<Phasor> b2;
    for (Phasor z : b) b2.push_back(4.0 * z);
    CHECK(std::abs(estimate_rho(a, b2) - r / 4.0) <= 1e-15);
}

TEST_CASE("rho input checks") {
    std::vector<Phasor> shortv(5, Phasor{1.0, 0.0});
    CHECK_THROWS_AS(estimate_rho(shortv, shortv), InputError);
    std::vector<Phasor> a(10, Phasor{1.0, 0.0}), z(10, Phasor{0.0, 0.0});
    CHECK_THROWS_AS(estimate_rho(a, z), NumericDomainError);
}

TEST_CASE("rho from noisy voltage history") {
    const auto v = true_builtin().measurements({8, 30}).voltage_at(8);
    REQUIRE(v.size() == 600);
    const Phasor rho{1.003, 0.0005};
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        // V_qs = V* / alpha_qs and V_qp = V* / alpha_qp with alpha_qs / alpha_qp = rho.
        std::vector<Phasor> vqs;
        for (Phasor z : v) vqs.push_back(z / rho);
        worst = std::max(worst, std::abs(estimate_rho(noisy(v, 0.001, rng), noisy(vqs, 0.001, rng)) - rho));
    }
    CHECK(worst <= 5e-4);
}

TEST_CASE("gamma on consistent noise-free currents is one") {
    const BusSeries s = bus8();
    const GammaEstimate g = estimate_gamma(s.qp, s.qs, s.ql, 8);
    CHECK(std::abs(g.gamma - 1.0) < 1e-10);
    REQUIRE(g.gamma_load.has_value());
    CHECK(std::abs(*g.gamma_load - 1.0) < 1e-10);
}

TEST_CASE("gamma recovers a planted CT ratio and matches a least-squares oracle") {
    const BusSeries s = bus8();
    std::vector<Phasor> qs;
    for (Phasor i : s.qs) qs.push_back(i / 0.95);
    const GammaEstimate g = estimate_gamma(s.qp, qs, s.ql, 8);
    std::vector<Phasor> rhs;
    for (Phasor i : s.qp) rhs.push_back(-i);
    const auto x = ols({qs, s.ql}, rhs);
    CHECK(std::abs(g.gamma - 0.95) < 1e-10);
    CHECK(std::abs(g.gamma - x[0]) < 1e-10);
    CHECK(std::abs(*g.gamma_load - x[1]) < 1e-10);
}

TEST_CASE("gamma at a degree-three bus solves one ratio per incident line") {
    const BusCurrentSet& s = true_builtin().bus_currents(30);
    REQUIRE(s.branches.size() == 3);
    const std::vector<Phasor> planted{{0.997, 0.002}, {1.004, -0.003}};
    std::vector<Phasor> qs, other;
    for (std::size_t t = 0; t < s.residual_current.size(); ++t) {
        qs.push_back(s.branch_currents[1][t] / planted[0]);
        other.push_back(s.branch_currents[2][t] / planted[1]);
    }
    const GammaEstimate g = estimate_gamma(s.branch_currents[0], qs, s.residual_current, 30, {other});
    CHECK(std::abs(g.gamma - planted[0]) < 1e-10);
    REQUIRE(g.gamma_others.size() == 1);
    CHECK(std::abs(g.gamma_others[0] - planted[1]) < 1e-10);
}

TEST_CASE("a dead residual channel drops the load ratio") {
    const BusCurrentSet& s = true_builtin().bus_currents(9);
    const GammaEstimate g = estimate_gamma(s.branch_currents[0], s.branch_currents[1], s.residual_current, 9);
    CHECK_FALSE(g.gamma_load.has_value());
    CHECK(std::abs(g.gamma - 1.0) < 1e-10);
}

TEST_CASE("collinear current profiles are ill-conditioned") {
    std::vector<Phasor> qp, qs, ql;
    for (int k = 0; k < 20; ++k) {
        const Phasor i = std::polar(1.0 + 0.01 * k, 0.1);
        qs.push_back(i);
        ql.push_back(2.0 * i);
        qp.push_back(-3.0 * i);
    }
    CHECK_THROWS_AS(estimate_gamma(qp, qs, ql, 42), IllConditionedError);
    try {
        estimate_gamma(qp, qs, ql, 42);
    } catch (const IllConditionedError& e) {
        CHECK(std::string(e.what()).find("bus 42") != std::string::npos);
    }
}

TEST_CASE("gamma from noisy currents") {
    const BusSeries s = bus8();
    const double gamma = 1.004;
    std::vector<Phasor> qs;
    for (Phasor i : s.qs) qs.push_back(i / gamma);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(1000 + seed);
        const GammaEstimate g = estimate_gamma(noisy(s.qp, 0.001, rng), noisy(qs, 0.001, rng), noisy(s.ql, 0.001, rng), 8);
        worst = std::max(worst, std::abs(g.gamma - gamma));
    }
    CHECK(worst <= 2e-3);
}

TEST_CASE("TLS residual never exceeds the OLS residual") {
    const BusSeries s = bus8();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const auto qp = noisy(s.qp, 0.01, rng), qs = noisy(s.qs, 0.01, rng), ql = noisy(s.ql, 0.01, rng);
        std::vector<Phasor> rhs;
        for (Phasor i : qp) rhs.push_back(-i);
        double r_ols = 0.0;
        ols({qs, ql}, rhs, &r_ols);
        const TlsSolution t = tls_complex({qs, ql}, rhs);
        CHECK(t.smallest_singular_value <= r_ols * (1.0 + 1e-12));
    }
}

TEST_CASE("complex and realified TLS agree") {
    const BusSeries s = bus8();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const auto qp = noisy(s.qp, 0.001, rng), qs = noisy(s.qs, 0.001, rng), ql = noisy(s.ql, 0.001, rng);
        std::vector<Phasor> rhs;
        for (Phasor i : qp) rhs.push_back(-i);
        const TlsSolution a = tls_complex({qs, ql}, rhs);
        const TlsSolution b = tls_realified({qs, ql}, rhs);
        for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(a.x[j] - b.x[j]) < 1e-8);
    }
}
