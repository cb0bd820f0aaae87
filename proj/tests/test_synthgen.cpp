#include <doctest.h>

#include <cmath>
#include <numbers>

#include "netslic/errors.hpp"
#include "netslic/networks.hpp"
#include "netslic/synthgen.hpp"

using namespace netslic;

namespace {

Phasor polar_deg(double mag, double deg) { return std::polar(mag, deg * std::numbers::pi / 180.0); }

NetworkSpec two_bus(double b) {
    NetworkSpec net;
    net.buses = {BusSpec{1, {}, true, {1.0, 0.0}}, BusSpec{2, {}, false, {1.0, 0.0}}};
    BranchSpec line;
    line.id = {1, 2};
    line.params = {0.01, 0.05, b};
    net.branches = {line};
    net.rqm_branch = {1, 2};
    net.rqm_end = 1;
    return net;
}

std::vector<Phasor> injections_of(const NetworkSpec& net) {
    std::vector<Phasor> out;
    for (const auto& b : net.buses) out.push_back(b.injection);
    return out;
}

// Nodal solve written out from scratch: Y V = I with the slack row replaced.
std::vector<Phasor> oracle_voltages(const NetworkSpec& net, const std::vector<Phasor>& inj) {
    const auto n = static_cast<Eigen::Index>(net.buses.size());
    std::map<BusId, Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i) idx[net.buses[static_cast<std::size_t>(i)].id] = i;
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : net.branches) {
        const Phasor y = 1.0 / Phasor{br.params.r, br.params.x};
        const Phasor sh{0.0, br.params.b};
        const auto f = idx[br.id.from], t = idx[br.id.to];
        Y(f, f) += y + sh;
        Y(t, t) += y + sh;
        Y(f, t) -= y;
        Y(t, f) -= y;
    }
    Eigen::VectorXcd rhs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& b = net.buses[static_cast<std::size_t>(i)];
        if (b.slack) {
            Y.row(i).setZero();
            Y(i, i) = 1.0;
            rhs[i] = b.slack_voltage;
        } else {
            rhs[i] = inj[static_cast<std::size_t>(i)];
        }
    }
    const Eigen::VectorXcd v = Y.fullPivLu().solve(rhs);
    return {v.data(), v.data() + n};
}

Dataset constant_dataset(std::size_t samples, Phasor value) {
    Dataset d;
    d.branches.push_back({{1, 2}, std::vector<PhasorSample>(samples, {value, value, value, value})});
    d.etas.branches[{1, 2}] = BranchEta{};
    return d;
}

}  // namespace

TEST_CASE("two-bus snapshot without charging carries the series current") {
    auto net = two_bus(0.0);
    const Phasor vq = polar_deg(0.99, -1.0);
    balance_injections(net, {{1, {1.0, 0.0}}, {2, vq}});
    const Snapshot s = solve_snapshot(net, injections_of(net));
    CHECK(std::abs(s.voltages[1] - vq) < 1e-13);
    const Phasor expected = (Phasor{1.0, 0.0} - vq) / Phasor{0.01, 0.05};
    CHECK(std::abs(s.i_from[0] - expected) < 1e-12);
    CHECK(std::abs(s.i_to[0] + expected) < 1e-12);
}

TEST_CASE("terminal currents sum to the shunt currents") {
    const LineParams lp{0.004, 0.05, 0.3};
    const Phasor vp = polar_deg(1.02, 3.0), vq = polar_deg(0.97, -4.0);
    const auto [ip, iq] = line_currents(lp, vp, vq);
    CHECK(std::abs(ip + iq - Phasor{0.0, lp.b} * (vp + vq)) < 1e-14);
}

TEST_CASE("chain snapshot matches an independent nodal solve and satisfies KCL") {
    const NetworkSpec net = chain_network(3);
    const auto inj = injections_of(net);
    const SnapshotSolver solver(net);
    const Snapshot s = solver.solve(inj);
    const auto v = oracle_voltages(net, inj);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(s.voltages[i] - v[i]) < 1e-12);
    CHECK(solver.kcl_residual(s, inj) < 1e-12);
}

TEST_CASE("balanced injections reproduce the target voltages on the built-in network") {
    const NetworkSpec net = builtin_network();
    const Snapshot s = solve_snapshot(net, injections_of(net));
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
        if (net.buses[i].id == 30) CHECK(std::abs(s.voltages[i] - Phasor{0.99, 0.0}) < 1e-10);
        if (net.buses[i].id == 10) CHECK(std::abs(s.voltages[i] - polar_deg(1.05, 19.4)) < 1e-10);
        CHECK(std::abs(s.voltages[i]) > 0.9);
        CHECK(std::abs(s.voltages[i]) < 1.1);
    }
}

TEST_CASE("grid model at unit scale reproduces the base case") {
    const NetworkSpec net = builtin_network();
    const GridModel grid(net);
    const std::vector<Phasor> ones(net.buses.size(), Phasor{1.0, 0.0});
    const Snapshot base = solve_snapshot(net, injections_of(net));
    const Snapshot s = grid.solve(ones, SnapshotSolver(net).slack_voltage());
    for (std::size_t i = 0; i < net.buses.size(); ++i) CHECK(std::abs(s.voltages[i] - base.voltages[i]) < 1e-10);
    const auto inj = grid.injections(s, ones);
    for (std::size_t i = 0; i < net.buses.size(); ++i)
        if (!net.buses[i].slack) CHECK(std::abs(inj[i] - net.buses[i].injection) < 1e-9);
}

TEST_CASE("true series obey KCL at every bus and instant") {
    const NetworkSpec net = builtin_network();
    LoadScenario load;
    load.periods = 2;
    Rng rng(11);
    const TrueSeries ts = generate_true_series(net, load, rng);
    REQUIRE(ts.snapshots.size() == load.samples());
    const SnapshotSolver solver(net);
    double worst = 0.0;
    for (std::size_t t = 0; t < ts.snapshots.size(); ++t)
        worst = std::max(worst, solver.kcl_residual(ts.snapshots[t], ts.injections[t]));
    CHECK(worst < 1e-12);
}

TEST_CASE("residual currents close KCL on noise-free perfect data") {
    const NetworkSpec net = builtin_network();
    LoadScenario load;
    load.periods = 1;
    Rng rng(3);
    const Dataset d = true_tree_data(net, generate_true_series(net, load, rng));
    for (const auto& set : d.buses) {
        for (std::size_t t = 0; t < set.residual_current.size(); ++t) {
            Phasor sum = set.residual_current[t];
            for (const auto& c : set.branch_currents) sum += c[t];
            CHECK(std::abs(sum) < 1e-12);
        }
    }
    // Bus 9 joins two monitored lines and nothing else.
    double peak = 0.0;
    for (Phasor i : d.bus_currents(9).residual_current) peak = std::max(peak, std::abs(i));
    CHECK(peak < 1e-12);
}

TEST_CASE("unit ratio errors and zero noise leave measurements unchanged") {
    Dataset d = constant_dataset(5, {0.8, 0.3});
    const Dataset orig = d;
    NoiseConfig cfg;
    cfg.tve_max = 0.0;
    Rng rng(1);
    apply_composite_noise(d, d.etas, cfg, rng);
    for (std::size_t t = 0; t < 5; ++t) CHECK(d.branches[0].samples[t].v_from == orig.branches[0].samples[t].v_from);
}

TEST_CASE("a real ratio error scales the measurement exactly") {
    Dataset d = constant_dataset(5, {0.8, 0.3});
    EtaAssignment etas;
    etas.branches[{1, 2}] = BranchEta{1.005, 1.005, 1.005, 1.005};
    NoiseConfig cfg;
    cfg.tve_max = 0.0;
    Rng rng(1);
    apply_composite_noise(d, etas, cfg, rng);
    CHECK(d.branches[0].samples[2].i_to == 1.005 * Phasor{0.8, 0.3});
}

TEST_CASE("additive noise respects the TVE bound at three sigma") {
    const Phasor truth{0.6, 0.8};
    Dataset d = constant_dataset(25000, truth);
    NoiseConfig cfg;
    cfg.tve_max = 0.001;
    Rng rng(2024);
    apply_composite_noise(d, d.etas, cfg, rng);
    std::size_t over = 0, total = 0;
    for (const auto& s : d.branches[0].samples)
        for (Phasor z : {s.v_from, s.v_to, s.i_from, s.i_to}) {
            ++total;
            if (std::abs(z - truth) > 0.001 * std::abs(truth)) ++over;
        }
    CHECK(total == 100000);
    CHECK(static_cast<double>(over) / static_cast<double>(total) <= 0.003);
}

TEST_CASE("ratio error draws stay inside the accuracy class") {
    Rng rng(5);
    for (double cls : {0.15, 0.6}) {
        const double bound = angle_bound_deg(cls);
        double lo = 2.0, hi = 0.0, ang = 0.0;
        for (int k = 0; k < 10000; ++k) {
            const Phasor eta = sample_eta(cls, bound, rng);
            lo = std::min(lo, std::abs(eta));
            hi = std::max(hi, std::abs(eta));
            ang = std::max(ang, std::abs(std::arg(eta)) * 180.0 / std::numbers::pi);
        }
        const double range = 2.0 * cls / 100.0;
        CHECK(lo >= 1.0 - cls / 100.0);
        CHECK(hi <= 1.0 + cls / 100.0);
        CHECK(lo - (1.0 - cls / 100.0) <= 0.001 * range);
        CHECK((1.0 + cls / 100.0) - hi <= 0.001 * range);
        CHECK(ang <= bound);
    }
    CHECK(angle_bound_deg(0.6) == doctest::Approx(0.522));
}

TEST_CASE("drawn assignments respect the RQM and regular classes") {
    const NetworkSpec net = builtin_network();
    NoiseConfig cfg;
    Rng rng(9);
    const EtaAssignment etas = draw_etas(net, cfg, rng);
    for (const auto& [id, e] : etas.branches) {
        const bool rqm = id.same_line(net.rqm_branch);
        const std::array<std::pair<Phasor, bool>, 4> ch{{{e.v_from, rqm && id.from == net.rqm_end},
                                                         {e.v_to, rqm && id.to == net.rqm_end},
                                                         {e.i_from, rqm && id.from == net.rqm_end},
                                                         {e.i_to, rqm && id.to == net.rqm_end}}};
        for (const auto& [eta, is_rqm] : ch) {
            const double cls = is_rqm ? 0.15 : 0.6;
            CHECK(std::abs(std::abs(eta) - 1.0) <= cls / 100.0);
        }
    }
    CHECK(etas.residual.size() == ConnectedTree::from_network(net).buses.size());

    cfg.perfect_rqm = true;
    Rng rng2(9);
    const EtaAssignment perfect = draw_etas(net, cfg, rng2);
    CHECK(perfect.at(net.rqm_branch).v_from == Phasor{1.0, 0.0});
    CHECK(perfect.at(net.rqm_branch).i_from == Phasor{1.0, 0.0});
}

TEST_CASE("correction factors are reciprocal ratio errors in either orientation") {
    EtaAssignment etas;
    etas.branches[{1, 2}] = BranchEta{{1.004, 0.001}, {0.997, -0.002}, {1.003, 0.0}, {0.995, 0.004}};
    const CorrectionFactors cf = etas.correction_factors({1, 2});
    CHECK(cf.alpha_from == 1.0 / Phasor{1.004, 0.001});
    const CorrectionFactors rev = etas.correction_factors({2, 1});
    CHECK(rev.alpha_from == cf.alpha_to);
    CHECK(rev.beta_to == cf.beta_from);
}

TEST_CASE("generation is bit-identical under a fixed seed") {
    const NetworkSpec net = builtin_network();
    NoiseConfig cfg;
    cfg.rng_seed = 77;
    LoadScenario load;
    load.periods = 2;
    const Dataset a = generate_dataset(net, cfg, load);
    const Dataset b = generate_dataset(net, cfg, load);
    for (std::size_t k = 0; k < a.branches.size(); ++k)
        for (std::size_t t = 0; t < a.branches[k].size(); ++t) {
            const auto& x = a.branches[k].samples[t];
            const auto& y = b.branches[k].samples[t];
            CHECK((x.v_from == y.v_from && x.v_to == y.v_to && x.i_from == y.i_from && x.i_to == y.i_to));
        }
    cfg.rng_seed = 78;
    const Dataset c = generate_dataset(net, cfg, load);
    CHECK(c.branches[0].samples[0].v_from != a.branches[0].samples[0].v_from);
}

TEST_CASE("configuration validation") {
    NoiseConfig n;
    n.tve_max = -1.0;
    CHECK_THROWS_AS(n.validate(), InputError);
    LoadScenario l;
    l.period = 2;
    CHECK_THROWS_AS(l.validate(), InputError);
    l = {};
    l.correlation = 1.0;
    CHECK_THROWS_AS(l.validate(), InputError);
}
