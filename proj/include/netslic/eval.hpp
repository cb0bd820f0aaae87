#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "netslic/errors.hpp"
#include "netslic/model.hpp"
#include "netslic/pipeline.hpp"
#include "netslic/solver.hpp"
#include "netslic/synthgen.hpp"

namespace netslic {

/// Absolute relative error in percent. Throws MetricError for a zero truth.
double are(double est, double truth);
/// Absolute angle error in degrees after wrapping both angles to (-180, 180].
double ae(double est_deg, double truth_deg);
double wrap_degrees(double deg);

enum class Scenario { kIdeal, kNoisyPerfectRqm, kRealistic, kCustom };

Scenario parse_scenario(const std::string& name);
std::string to_string(Scenario s);
/// Applies a preset's noise and IT settings on top of `base`; kCustom returns `base`.
NoiseConfig scenario_noise(Scenario s, NoiseConfig base = {});

struct ScenarioConfig {
    NetworkSpec network;
    Scenario scenario = Scenario::kRealistic;
    NoiseConfig noise;
    LoadScenario load;
    SolverConfig solver;
    /// Database line parameters are truth times (1 + U(-spread, spread)).
    double database_spread = 0.10;

    /// Preset defaults on the built-in network.
    static ScenarioConfig preset(Scenario s);
    void validate() const;
};

/// Database line parameters for every tree branch of `net`.
std::map<BranchId, LineParams> database_params(const NetworkSpec& net, double spread, Rng& rng);

/// Running mean and standard deviation.
struct ErrorStats {
    std::size_t count = 0;
    double sum = 0.0;
    double sum_sq = 0.0;
    double max = 0.0;

    void add(double v);
    void merge(const ErrorStats& o);
    double mean() const;
    /// Population standard deviation.
    double sd() const;
};

enum CfSlot { kAlphaFrom = 0, kAlphaTo, kBetaFrom, kBetaTo };
const char* cf_slot_name(int slot);
inline bool is_voltage_slot(int slot) { return slot == kAlphaFrom || slot == kAlphaTo; }

struct BranchMetrics {
    BranchId branch;
    ErrorStats r, x, b;
    /// Indexed by CfSlot: magnitude ARE (%) and angle AE (degrees).
    std::array<ErrorStats, 4> cf_mag, cf_ang;

    void merge(const BranchMetrics& o);
};

struct MetricReport {
    std::string scenario;
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    std::vector<BranchMetrics> branches;

    const BranchMetrics& at(const BranchId& id) const;
    /// Largest per-branch MARE of one line parameter ('r', 'x' or 'b').
    double max_line_mare(char param) const;
    double max_line_mare() const;
    /// Largest per-channel CF magnitude MARE / angle MAE over VT, CT or all channels.
    double max_cf_mag_mare(std::optional<bool> voltage = std::nullopt) const;
    double max_cf_ang_mae(std::optional<bool> voltage = std::nullopt) const;
    /// Mean line-parameter MARE plus mean CF magnitude MARE, in percent.
    double aggregate_error() const;
};

/// Per-trial errors of one calibrated dataset against its ground truth.
std::vector<BranchMetrics> score_result(const PipelineResult& res, const Dataset& data);

/// Everything one trial produces, kept for callers that need more than metrics.
struct TrialOutput {
    Dataset data;
    PipelineInputs inputs;
    PipelineResult result;
};

/// Dataset and pipeline inputs of one trial, not yet calibrated; the dataset seed is `seed`.
TrialOutput generate_trial(const ScenarioConfig& cfg, std::uint64_t seed);

/// Generates, calibrates and returns one trial.
TrialOutput run_trial(const ScenarioConfig& cfg, std::uint64_t seed);

/// Carries the index and seed of the failing Monte-Carlo trial.
class TrialError : public PipelineError {
public:
    TrialError(std::size_t trial, std::uint64_t seed, const std::string& what)
        : PipelineError("trial " + std::to_string(trial) + " (seed " + std::to_string(seed) + "): " + what),
          trial_(trial), seed_(seed) {}
    std::size_t trial() const { return trial_; }
    std::uint64_t seed() const { return seed_; }

private:
    std::size_t trial_;
    std::uint64_t seed_;
};

/// Seed of trial `k` under `root`.
std::uint64_t trial_seed(std::uint64_t root, std::size_t k);

/// Runs `trials` independent trials on `jobs` threads (0 = all cores). The
/// reduction happens in trial order, so the report does not depend on `jobs`.
MetricReport run_monte_carlo(const ScenarioConfig& cfg, std::size_t trials, std::uint64_t seed,
                             unsigned jobs = 0);

struct SweepRow {
    double lambda = 0.0;
    MetricReport report;
};

/// One report per value with lambda = lambda1 = value.
std::vector<SweepRow> sweep_lambda(const std::vector<double>& values, const ScenarioConfig& cfg,
                                   std::size_t trials, std::uint64_t seed, unsigned jobs = 0);

/// One row per branch and parameter: branch,parameter,mare,sdare,count.
void write_report_csv(std::ostream& os, const MetricReport& rep);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);
/// Fixed-width console table.
void print_report(std::ostream& os, const MetricReport& rep);

}  // namespace netslic
