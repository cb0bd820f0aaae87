#include <doctest.h>

#include "netslic/errors.hpp"
#include "netslic/formulation.hpp"
#include "netslic/networks.hpp"
#include "netslic/pipeline.hpp"
#include "netslic/synthgen.hpp"

using namespace netslic;

namespace {

PipelineInputs inputs_of(const Dataset& d, double spread = 0.1) {
    PipelineInputs in;
    in.tree = d.tree;
    in.branches = d.branches;
    in.buses = d.buses;
    int k = 0;
    for (const BranchId& id : d.tree.branches) {
        LineParams p = d.network.branch(id).params;
        const double f = 1.0 + spread * ((k++ % 3) - 1);
        p.r *= f;
        p.x *= 2.0 - f;
        p.b *= f;
        in.initial[id] = p;
    }
    return in;
}

Dataset noise_free(const NetworkSpec& net, std::uint64_t seed, std::size_t periods = 10) {
    NoiseConfig cfg;
    cfg.tve_max = 0.0;
    cfg.perfect_rqm = true;
    cfg.rng_seed = seed;
    LoadScenario load;
    load.periods = periods;
    return generate_dataset(net, cfg, load);
}

double worst_error(const PipelineResult& res, const Dataset& d) {
    double worst = 0.0;
    for (const BranchId& id : d.tree.branches) {
        const SlicEstimate& e = res.at(id);
        const LineParams t = d.network.branch(id).params;
        worst = std::max({worst, std::abs(e.line.r - t.r), std::abs(e.line.x - t.x), std::abs(e.line.b - t.b)});
        CorrectionFactors cf = e.cfs;
        if (!(e.branch == id)) cf = {cf.alpha_to, cf.alpha_from, cf.beta_to, cf.beta_from};
        const CorrectionFactors tc = d.etas.correction_factors(id);
        for (auto [a, b] : {std::pair{cf.alpha_from, tc.alpha_from}, std::pair{cf.alpha_to, tc.alpha_to},
                            std::pair{cf.beta_from, tc.beta_from}, std::pair{cf.beta_to, tc.beta_to}})
            worst = std::max(worst, std::abs(a - b));
    }
    return worst;
}

}  // namespace

TEST_CASE("single-branch tree reduces to the RQM solve and its reconstruction") {
    NetworkSpec net = chain_network(1);
    const Dataset d = noise_free(net, 1, 2);
    const PipelineInputs in = inputs_of(d);
    SolverConfig cfg;
    cfg.runs = 2;
    const PipelineResult res = run_pipeline(in, cfg);
    REQUIRE(res.estimates.size() == 1);
    const SlicEstimate& e = res.estimates[0];

    std::vector<PsiVector> runs;
    for (std::size_t j = 0; j < 2; ++j) {
        const DesignSystem sys = build_design_system(d.branches[0].window(j * 60, 60), net.rqm_end);
        runs.push_back(
            solve_rqm_branch(sys, cfg, PsiVector::from_parts({1, 2}, 1, in.initial_params({1, 2}), 1.0, 1.0, 1.0)).psi);
    }
    const RqmCorrection rc = reconstruct_rqm_cfs(runs);
    CHECK(e.cfs.alpha_to == rc.alpha_far);
    CHECK(e.cfs.beta_from == rc.beta_ref);
    CHECK(e.cfs.beta_to == rc.beta_far);
    CHECK(e.cfs.alpha_from == Phasor{1.0, 0.0});
}

TEST_CASE("noise-free chain recovers every line parameter and correction factor") {
    const Dataset d = noise_free(chain_network(3), 2);
    const PipelineResult res = run_pipeline(inputs_of(d), SolverConfig{});
    CHECK(res.estimates.size() == 3);
    CHECK(res.estimates.front().branch.same_line({1, 2}));
    CHECK(worst_error(res, d) <= 1e-7);
}

TEST_CASE("noise-free built-in network recovers every unknown") {
    const Dataset d = noise_free(builtin_network(), 3);
    const PipelineResult res = run_pipeline(inputs_of(d), SolverConfig{});
    CHECK(res.estimates.size() == d.tree.branches.size());
    CHECK(worst_error(res, d) <= 1e-7);
    for (const auto& e : res.estimates) {
        CHECK(e.diag.converged);
        if (!e.branch.same_line(d.tree.rqm_branch)) CHECK(e.diag.constraint_violation <= 1e-8);
    }
}

TEST_CASE("solve order is breadth-first from the RQM branch") {
    const Dataset d = noise_free(builtin_network(), 4, 1);
    const PipelineResult res = run_pipeline(inputs_of(d), SolverConfig{});
    std::size_t last = 0;
    for (const auto& e : res.estimates) {
        CHECK(e.path.size() >= last);
        last = e.path.size();
        if (e.path.size() > 1) CHECK(res.contains(e.path[e.path.size() - 2]));
    }
}

TEST_CASE("failed branches are reported with the partial result") {
    const Dataset d = noise_free(chain_network(3), 5, 1);
    PipelineInputs in = inputs_of(d);
    // Make the currents at bus 2 collinear so the CT ratio there is unidentifiable.
    for (auto& set : in.buses) {
        if (set.bus != 2) continue;
        set.residual_current = in.measurements({2, 3}).current_at(2);
        for (auto& v : set.residual_current) v *= 2.0;
    }
    try {
        run_pipeline(in, SolverConfig{});
        FAIL("expected a partial result");
    } catch (const PartialResultError& e) {
        CHECK(e.partial().contains({1, 2}));
        CHECK_FALSE(e.partial().contains({2, 3}));
        CHECK_FALSE(e.partial().contains({3, 4}));
        CHECK(e.partial().failures.size() == 2);
    }
}

TEST_CASE("missing inputs are pipeline errors") {
    const Dataset d = noise_free(chain_network(2), 6, 1);
    PipelineInputs in = inputs_of(d);
    in.initial.erase({2, 3});
    CHECK_THROWS_AS(in.initial_params({2, 3}), PipelineError);
    CHECK_THROWS_AS(in.bus_currents(99), PipelineError);
}

TEST_CASE("pipeline reruns are bit-identical") {
    NoiseConfig cfg;
    cfg.rng_seed = 7;
    const Dataset d = generate_dataset(builtin_network(), cfg, LoadScenario{});
    const PipelineResult a = run_pipeline(inputs_of(d), SolverConfig{});
    const PipelineResult b = run_pipeline(inputs_of(d), SolverConfig{});
    REQUIRE(a.estimates.size() == b.estimates.size());
    for (std::size_t k = 0; k < a.estimates.size(); ++k) {
        CHECK(a.estimates[k].psi.values() == b.estimates[k].psi.values());
        CHECK(a.estimates[k].cfs.beta_to == b.estimates[k].cfs.beta_to);
    }
}
