#include "netslic/pipeline.hpp"

#include <algorithm>
#include <set>

#include "netslic/formulation.hpp"
#include "netslic/ratios.hpp"

namespace netslic {

namespace {

PsiVector average(const std::vector<PsiVector>& runs) {
    Psi9 sum = Psi9::Zero();
    for (const auto& p : runs) sum += p.values();
    return PsiVector(runs.front().branch(), runs.front().reference_end(), sum / static_cast<double>(runs.size()));
}

void merge_worst(SolveDiagnostics& acc, const SolveDiagnostics& d, bool first) {
    if (first) {
        acc = d;
        return;
    }
    acc.iterations = std::max(acc.iterations, d.iterations);
    acc.grad_norm = std::max(acc.grad_norm, d.grad_norm);
    acc.step_norm = std::max(acc.step_norm, d.step_norm);
    acc.constraint_violation = std::max(acc.constraint_violation, d.constraint_violation);
    acc.converged = acc.converged && d.converged;
    acc.plausible = acc.plausible && d.plausible;
}

}  // namespace

const BranchMeasurements& PipelineInputs::measurements(const BranchId& id) const {
    for (const auto& m : branches)
        if (m.branch.same_line(id)) return m;
    throw PipelineError("missing measurements for branch " + to_string(id));
}

const BusCurrentSet& PipelineInputs::bus_currents(BusId bus) const {
    for (const auto& b : buses)
        if (b.bus == bus) return b;
    throw PipelineError("missing residual currents for bus " + std::to_string(bus));
}

LineParams PipelineInputs::initial_params(const BranchId& id) const {
    for (const auto& [k, v] : initial)
        if (k.same_line(id)) return v;
    throw PipelineError("missing initial line parameters for branch " + to_string(id));
}

const SlicEstimate& PipelineResult::at(const BranchId& id) const {
    for (const auto& e : estimates)
        if (e.branch.same_line(id)) return e;
    throw PipelineError("branch " + to_string(id) + " has no estimate yet");
}

bool PipelineResult::contains(const BranchId& id) const {
    return std::any_of(estimates.begin(), estimates.end(), [&](const auto& e) { return e.branch.same_line(id); });
}

PipelineResult run_pipeline(const PipelineInputs& in, const SolverConfig& cfg) {
    cfg.validate();
    in.tree.validate();

    std::size_t total = SIZE_MAX;
    for (const auto& b : in.tree.branches) {
        const auto& m = in.measurements(b);
        m.validate();
        total = std::min(total, m.size());
    }
    PipelineResult result;
    result.window = std::min(cfg.window, total);
    result.runs = std::max<std::size_t>(1, std::min(cfg.runs, total / result.window));
    const std::size_t n = result.window;
    const std::size_t runs = result.runs;

    struct Job {
        BranchId branch;
        std::vector<BranchId> path;
        std::size_t order;
    };
    std::vector<Job> jobs;
    for (std::size_t k = 0; k < in.tree.branches.size(); ++k)
        jobs.push_back({in.tree.branches[k], find_path(in.tree, in.tree.branches[k]), k});
    std::stable_sort(jobs.begin(), jobs.end(),
                     [](const Job& a, const Job& b) { return a.path.size() < b.path.size(); });

    std::set<BranchId> failed;
    for (const Job& job : jobs) {
        const BranchId b = job.branch;
        try {
            SlicEstimate est;
            est.branch = b;
            est.path = job.path;
            const BranchMeasurements& cur = in.measurements(b);

            if (job.path.size() == 1) {
                const BusId ref = in.tree.rqm_end;
                est.reference_end = ref;
                const LineParams init_line = in.initial_params(b);
                for (std::size_t j = 0; j < runs; ++j) {
                    const DesignSystem sys = build_design_system(cur.window(j * n, n), ref);
                    const PsiVector init = PsiVector::from_parts(b, ref, init_line, 1.0, 1.0, 1.0);
                    RqmSolution sol = solve_rqm_branch(sys, cfg, init);
                    merge_worst(est.diag, sol.diag, j == 0);
                    est.runs.push_back(sol.psi);
                }
                est.psi = average(est.runs);
                const RqmCorrection rc = reconstruct_rqm_cfs(est.runs);
                est.cfs = reconstruct_branch_cfs(1.0, b, ref, rc.alpha_far, rc.beta_ref, rc.beta_far);
            } else {
                const BranchId prev = job.path[job.path.size() - 2];
                if (failed.count(prev) || !result.contains(prev))
                    throw PipelineError("predecessor " + to_string(prev) + " was not calibrated");
                const SlicEstimate& prev_est = result.at(prev);
                const BusId q = *prev.shared_bus(b);
                est.reference_end = q;
                const BranchMeasurements& pm = in.measurements(prev);

                const Phasor rho = estimate_rho(pm.voltage_at(q), cur.voltage_at(q));
                const BusCurrentSet& bus = in.bus_currents(q);
                std::vector<std::vector<Phasor>> others;
                for (const BranchId& o : in.tree.incident(q))
                    if (!o.same_line(prev) && !o.same_line(b)) others.push_back(in.measurements(o).current_at(q));
                const std::vector<Phasor> i_qp = pm.current_at(q);
                const std::vector<Phasor> i_qs = cur.current_at(q);
                const GammaEstimate gamma = estimate_gamma(i_qp, i_qs, bus.residual_current, q, others);
                est.rho = rho;
                est.gamma = gamma.gamma;

                const EqualityConstraint constraint = build_equality_constraint(rho, gamma.gamma);
                const PsiVector prior = referenced_at(prev_est.psi, q);
                const LineParams init_line = in.initial_params(b);
                const Phasor init_ref_current = gamma.gamma / rho * prior.ref_current_ratio();
                for (std::size_t j = 0; j < runs; ++j) {
                    const DesignSystem d_qp = build_design_system(pm.window(j * n, n), q);
                    const DesignSystem d_qs = build_design_system(cur.window(j * n, n), q);
                    const PsiVector init = PsiVector::from_parts(b, q, init_line, 1.0, init_ref_current, 1.0);
                    PairSolution sol = solve_branch_pair(d_qp, d_qs, prior, constraint, cfg, init);
                    merge_worst(est.diag, sol.diag, j == 0);
                    est.runs.push_back(sol.qs);
                }
                est.psi = average(est.runs);

                // Chain the VT ratios from the RQM end to this line's reference bus.
                std::vector<std::vector<Phasor>> hops;
                std::vector<Phasor> rhos;
                for (std::size_t h = 0; h + 1 < job.path.size(); ++h) {
                    const SlicEstimate& he = result.at(job.path[h]);
                    const BusId exit = *job.path[h].shared_bus(job.path[h + 1]);
                    std::vector<Phasor> ratios;
                    for (const auto& p : he.runs)
                        ratios.push_back(exit == he.reference_end ? Phasor{1.0, 0.0} : p.far_voltage_ratio());
                    hops.push_back(std::move(ratios));
                    const bool last = h + 2 == job.path.size();
                    const std::optional<Phasor> r = last ? est.rho : result.at(job.path[h + 1]).rho;
                    if (!r) throw PipelineError("missing bus VT ratio on the path to " + to_string(b));
                    rhos.push_back(*r);
                }
                est.lambda = compute_lambda_chain(hops, rhos, runs);
                est.cfs = reconstruct_branch_cfs(est.lambda, b, q, est.psi.far_voltage_ratio(),
                                                 est.psi.ref_current_ratio(), est.psi.far_current_ratio());
            }
            est.line = est.psi.line();
            result.estimates.push_back(std::move(est));
        } catch (const Error& e) {
            failed.insert(b);
            result.failures.push_back("branch " + to_string(b) + ": " + e.what());
        }
    }

    if (!result.failures.empty()) {
        std::string msg = std::to_string(result.failures.size()) + " branch(es) failed to calibrate:";
        for (const auto& f : result.failures) msg += "\n  " + f;
        throw PartialResultError(msg, std::move(result));
    }
    return result;
}

}  // namespace netslic
