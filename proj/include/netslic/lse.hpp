#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netslic/eval.hpp"
#include "netslic/model.hpp"

namespace netslic {

/// One PMU channel: the voltage at `bus` or the current leaving `bus` into `branch`.
struct Channel {
    BranchId branch;
    BusId bus = 0;
    bool current = false;
};

/// Linear measurement model z = H v + e over the voltages of the tree buses.
struct ObservationModel {
    /// State order.
    std::vector<BusId> buses;
    /// Row order; two channels per end of every monitored line.
    std::vector<Channel> channels;
    Eigen::MatrixXcd H;
    /// Inverse error variance of each channel.
    Eigen::VectorXd weights;
    /// Multiplier applied to each raw measurement before estimation (its correction factor).
    std::vector<Phasor> correction;

    /// Throws ObservabilityError unless H has full column rank.
    void validate() const;
};

/// Rows follow the pi model of each line under `params`. With `cfs` empty the
/// raw measurements are used; otherwise each channel is scaled by its factor.
/// The weight of a channel is 1 / sigma^2 with
/// sigma = sigma_rel * mean |measurement| (sigma_rel floored at 1e-6).
ObservationModel build_observation_model(const ConnectedTree& tree, const std::vector<BranchMeasurements>& data,
                                         const std::map<BranchId, LineParams>& params,
                                         const std::map<BranchId, CorrectionFactors>& cfs, double sigma_rel);

/// Raw channel values at instant `t`, in the model's row order.
Eigen::VectorXcd channel_values(const ObservationModel& model, const std::vector<BranchMeasurements>& data,
                                std::size_t t);

struct StateEstimate {
    Eigen::VectorXcd voltages;
    /// z - H v after correction, for diagnostics.
    Eigen::VectorXcd residual;
};

/// Weighted least squares with a normal-equation factorisation reused across instants.
class StateEstimator {
public:
    explicit StateEstimator(ObservationModel model);

    StateEstimate estimate(const Eigen::VectorXcd& raw) const;
    const ObservationModel& model() const { return model_; }

private:
    ObservationModel model_;
    Eigen::LDLT<Eigen::MatrixXcd> normal_;
};

/// Mean magnitude ARE (%) and angle AE (degrees) across buses and instants.
struct LseScore {
    double are = 0.0;
    double ae = 0.0;
    std::size_t count = 0;
};

/// Estimates every instant of `data` and scores it against the true voltages.
LseScore score_states(const StateEstimator& est, const Dataset& data);

enum class ParamSource { kLegacy, kEstimated, kTruth };
enum class CfSource { kNone, kEstimated, kTruth };

/// Observation model for one calibrated trial.
ObservationModel trial_observation_model(const TrialOutput& t, ParamSource params, CfSource cfs, double sigma_rel);

struct LseComparison {
    LseScore base;
    LseScore post_slic;
};

/// Base case (legacy parameters, no correction) against the calibrated model on the same data.
LseComparison compare_lse(const TrialOutput& t, double sigma_rel);

struct LseSummary {
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    LseScore base;
    LseScore post_slic;
    /// Relative reduction of the net errors, in percent.
    double improvement_are_pct = 0.0;
    double improvement_ae_pct = 0.0;
};

/// Paired trials: each trial calibrates one dataset and compares both models on it.
LseSummary run_lse_study(const ScenarioConfig& cfg, std::size_t trials, std::uint64_t seed, unsigned jobs = 0);

void write_lse_json(std::ostream& os, const LseSummary& s);

}  // namespace netslic
