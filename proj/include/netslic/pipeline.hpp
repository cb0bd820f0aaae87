#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netslic/errors.hpp"
#include "netslic/model.hpp"
#include "netslic/solver.hpp"

namespace netslic {

/// Everything the network-wide calibration consumes.
struct PipelineInputs {
    ConnectedTree tree;
    std::vector<BranchMeasurements> branches;
    std::vector<BusCurrentSet> buses;
    /// Initial ("database") line parameters per tree branch.
    std::map<BranchId, LineParams> initial;

    const BranchMeasurements& measurements(const BranchId& id) const;
    const BusCurrentSet& bus_currents(BusId bus) const;
    LineParams initial_params(const BranchId& id) const;
};

struct SlicEstimate {
    BranchId branch;
    /// Bus whose VT the ratios below are taken against.
    BusId reference_end = 0;
    LineParams line;
    CorrectionFactors cfs;
    /// Run-averaged parameter vector and the individual runs.
    PsiVector psi;
    std::vector<PsiVector> runs;
    std::vector<BranchId> path;
    Phasor lambda{1.0, 0.0};
    std::optional<Phasor> rho;
    std::optional<Phasor> gamma;
    /// Worst case over runs (iterations, gradient, constraint violation).
    SolveDiagnostics diag;
};

struct PipelineResult {
    /// In solve order: the RQM branch first, then breadth-first.
    std::vector<SlicEstimate> estimates;
    std::vector<std::string> failures;
    std::size_t runs = 0;
    std::size_t window = 0;

    const SlicEstimate& at(const BranchId& id) const;
    bool contains(const BranchId& id) const;
};

/// Raised when some branches could not be calibrated; carries what was solved.
class PartialResultError : public PipelineError {
public:
    PartialResultError(const std::string& what, PipelineResult partial)
        : PipelineError(what), partial_(std::move(partial)) {}
    const PipelineResult& partial() const { return partial_; }

private:
    PipelineResult partial_;
};

/// Network-wide calibration: the RQM branch first, then every other line
/// paired with its predecessor on the path from the RQM branch.
PipelineResult run_pipeline(const PipelineInputs& in, const SolverConfig& cfg);

}  // namespace netslic
