#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "netslic/model.hpp"
#include "netslic/random.hpp"

namespace netslic {

struct NoiseConfig {
    /// Total vector error bound of the additive PMU noise, as a fraction.
    double tve_max = 0.001;
    std::uint64_t rng_seed = 1;
    /// Accuracy class (percent) of ordinary ITs and of the RQM pair.
    double it_accuracy_regular = 0.6;
    double it_accuracy_rqm = 0.15;
    /// RQM VT/CT ratio errors are exactly 1 when set.
    bool perfect_rqm = false;
    /// Phase limit of a ratio error in degrees per percent of accuracy class.
    double angle_deg_per_class = 0.87;

    void validate() const;
};

struct LoadScenario {
    /// Instants in one load pickup (one hour at one frame per minute).
    std::size_t period = 60;
    /// Pickups generated back to back; solver windows and ratio history are cut from these.
    std::size_t periods = 10;
    /// Linear growth of every injection across each pickup (0.6 = +60%).
    double ramp_fraction = 0.60;
    /// Std-dev of the per-bus AR(1) ambient fluctuation of injection magnitude.
    double fluctuation = 0.03;
    /// Std-dev in radians of the per-bus ambient fluctuation of injection angle.
    double angle_fluctuation = 0.02;
    double correlation = 0.9;
    /// Std-dev of a per-bus load factor drawn afresh for every period (the
    /// load mix differs from one pickup to the next).
    double period_spread = 0.20;
    /// Std-dev of the AR(1) swing of the slack voltage magnitude (upstream grid).
    double slack_fluctuation = 0.01;

    std::size_t samples() const { return period * periods; }
    void validate() const;
};

double angle_bound_deg(double accuracy_class, double deg_per_class = 0.87);

/// Ratio error with |eta| uniform in [1 - c/100, 1 + c/100] and angle
/// uniform in +/- angle_bound_deg.
Phasor sample_eta(double accuracy_class, double angle_bound_deg, Rng& rng);

struct BranchEta {
    Phasor v_from{1.0, 0.0};
    Phasor v_to{1.0, 0.0};
    Phasor i_from{1.0, 0.0};
    Phasor i_to{1.0, 0.0};
};

/// Multiplicative ratio error of every channel: four per monitored line and
/// one per tree bus for the residual-current CT.
struct EtaAssignment {
    std::map<BranchId, BranchEta> branches;
    std::map<BusId, Phasor> residual;

    const BranchEta& at(const BranchId& id) const;
    /// True correction factors (1/eta) in the orientation of `id`.
    CorrectionFactors correction_factors(const BranchId& id) const;
};

EtaAssignment unit_etas(const ConnectedTree& tree);
EtaAssignment draw_etas(const NetworkSpec& net, const NoiseConfig& cfg, Rng& rng);

/// Noise-free operating point at one instant.
struct Snapshot {
    /// Aligned with NetworkSpec::buses.
    std::vector<Phasor> voltages;
    /// Current leaving each end into the line, aligned with NetworkSpec::branches.
    std::vector<Phasor> i_from;
    std::vector<Phasor> i_to;
};

/// Bus admittance matrix in NetworkSpec::buses order (pi model, shunt jb at each end).
Eigen::MatrixXcd admittance_matrix(const NetworkSpec& net);

/// Sets every bus injection so that the base operating point has the given
/// voltages. Non-slack buses missing from `voltages` keep zero injection and
/// their voltage follows from KCL; the slack takes its listed voltage.
void balance_injections(NetworkSpec& net, const std::map<BusId, Phasor>& voltages);

/// Nodal-admittance solve with the slack voltage held fixed and current
/// injections at every other bus. The admittance factorisation is reused
/// across instants.
class SnapshotSolver {
public:
    explicit SnapshotSolver(const NetworkSpec& net);

    /// `injections` is aligned with NetworkSpec::buses; the slack entry is ignored.
    Snapshot solve(std::span<const Phasor> injections) const;
    /// Same, with the slack voltage overridden for this instant.
    Snapshot solve(std::span<const Phasor> injections, Phasor v_slack) const;
    Phasor slack_voltage() const;

    const NetworkSpec& network() const { return net_; }
    /// KCL mismatch (max abs) at every bus except the slack.
    double kcl_residual(const Snapshot& s, std::span<const Phasor> injections) const;

private:
    NetworkSpec net_;
    std::map<BusId, Eigen::Index> index_;
    Eigen::Index slack_ = 0;
    std::vector<Eigen::Index> free_;
    Eigen::MatrixXcd ybus_;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
};

/// One-shot convenience wrapper around SnapshotSolver.
Snapshot solve_snapshot(const NetworkSpec& net, std::span<const Phasor> injections);

/// Pi-model terminal currents of a line for given end voltages.
std::pair<Phasor, Phasor> line_currents(const LineParams& lp, Phasor v_from, Phasor v_to);

/// Behaviour of every bus around the base operating point (the current
/// injections of NetworkSpec at the slack setpoint). Buses that draw real
/// power become constant admittances scaled by the load profile; the others
/// become fixed EMFs behind `source_reactance`. Unit scale reproduces the
/// base case.
class GridModel {
public:
    explicit GridModel(const NetworkSpec& net, double source_reactance = 0.1);

    /// `load_scale` is aligned with NetworkSpec::buses; entries of source
    /// buses and the slack are ignored.
    Snapshot solve(std::span<const Phasor> load_scale, Phasor v_slack) const;
    /// Current each bus device delivers into the network at `s`.
    std::vector<Phasor> injections(const Snapshot& s, std::span<const Phasor> load_scale) const;

    const Snapshot& base() const { return base_; }
    bool is_source(std::size_t bus_index) const { return source_[bus_index]; }
    const NetworkSpec& network() const { return net_; }

private:
    NetworkSpec net_;
    Eigen::Index slack_ = 0;
    Eigen::MatrixXcd ybus_;
    Snapshot base_;
    std::vector<bool> source_;
    /// Load admittance at unit scale, or the source's internal admittance.
    std::vector<Phasor> device_y_;
    std::vector<Phasor> emf_;
};

/// Per-bus load multipliers: a linear ramp restarting every period, times an
/// AR(1) ambient fluctuation of magnitude and angle.
std::vector<std::vector<Phasor>> generate_load_profiles(const NetworkSpec& net, const LoadScenario& load,
                                                        Rng& rng);

/// Slack voltage trajectory: the configured setpoint times an AR(1) swing.
std::vector<Phasor> generate_slack_voltages(const NetworkSpec& net, const LoadScenario& load, Rng& rng);

struct TrueSeries {
    /// Device currents into the network, aligned with NetworkSpec::buses.
    std::vector<std::vector<Phasor>> injections;
    std::vector<Snapshot> snapshots;
};

TrueSeries generate_true_series(const NetworkSpec& net, const LoadScenario& load, Rng& rng);

/// Measured tree data plus the ground truth it was generated from.
struct Dataset {
    NetworkSpec network;
    ConnectedTree tree;
    std::vector<BranchMeasurements> branches;
    std::vector<BusCurrentSet> buses;
    EtaAssignment etas;
    TrueSeries truth;

    const BranchMeasurements& measurements(const BranchId& id) const;
    const BusCurrentSet& bus_currents(BusId bus) const;
};

/// True tree quantities without any IT error or noise.
Dataset true_tree_data(const NetworkSpec& net, const TrueSeries& truth);

/// measured = eta * true + noise, noise i.i.d. complex Gaussian with
/// per-component sigma = tve_max * |true| / (3 * sqrt(2)).
void apply_composite_noise(Dataset& data, const EtaAssignment& etas, const NoiseConfig& cfg, Rng& rng);

/// Full generation: etas, load trajectory, snapshots and noisy measurements,
/// every random stream derived from cfg.rng_seed.
Dataset generate_dataset(const NetworkSpec& net, const NoiseConfig& cfg, const LoadScenario& load);

}  // namespace netslic
