#pragma once

#include <array>
#include <complex>
#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace netslic {

using BusId = int;

/// Per-unit complex phasor.
using Phasor = std::complex<double>;

inline bool is_finite(Phasor p) { return std::isfinite(p.real()) && std::isfinite(p.imag()); }

/// A line identified by its ordered end buses. (p,q) and (q,p) are the same
/// physical line with the measurement roles exchanged.
struct BranchId {
    BusId from = 0;
    BusId to = 0;

    auto operator<=>(const BranchId&) const = default;

    BranchId reversed() const { return {to, from}; }
    bool same_line(const BranchId& o) const {
        return (from == o.from && to == o.to) || (from == o.to && to == o.from);
    }
    bool touches(BusId bus) const { return bus == from || bus == to; }
    BusId other_end(BusId bus) const { return bus == from ? to : from; }
    /// Bus shared with another line, if exactly one is shared.
    std::optional<BusId> shared_bus(const BranchId& o) const;
};

std::string to_string(const BranchId& b);

/// Series resistance/reactance and the per-end shunt susceptance of the
/// pi-model: I_pq = j*b*V_p + (V_p - V_q)/z.
struct LineParams {
    double r = 0.0;
    double x = 0.0;
    double b = 0.0;

    Phasor impedance() const { return {r, x}; }
    /// Throws InputError unless x > 0, r >= 0, b >= 0 and all finite.
    void validate() const;
};

/// VT (alpha) and CT (beta) correction factors at both ends of one line.
struct CorrectionFactors {
    Phasor alpha_from{1.0, 0.0};
    Phasor alpha_to{1.0, 0.0};
    Phasor beta_from{1.0, 0.0};
    Phasor beta_to{1.0, 0.0};

    void validate() const;
};

using Psi9 = Eigen::Matrix<double, 9, 1>;
using ThetaVector = Eigen::Matrix<double, 8, 1>;

/// Named slots of the nine-parameter line/ratio vector.
enum PsiSlot : int {
    kResistance = 0,
    kReactance = 1,
    kSusceptance = 2,
    kFarVoltageRe = 3,
    kFarVoltageIm = 4,
    kRefCurrentRe = 5,
    kRefCurrentIm = 6,
    kFarCurrentRe = 7,
    kFarCurrentIm = 8,
};

/// Line parameters plus the three correction-factor ratios of a branch,
/// all taken relative to the VT correction factor at `reference_end`:
///   (r, x, b, alpha_far/alpha_ref, beta_ref/alpha_ref, beta_far/alpha_ref)
/// with each complex ratio split into real and imaginary parts.
class PsiVector {
public:
    PsiVector() = default;
    PsiVector(BranchId branch, BusId reference_end, const Psi9& values);

    static PsiVector from_parts(BranchId branch, BusId reference_end, const LineParams& line,
                                Phasor far_voltage, Phasor ref_current, Phasor far_current);

    const Psi9& values() const { return values_; }
    double operator[](int i) const { return values_[i]; }

    BranchId branch() const { return branch_; }
    BusId reference_end() const { return reference_end_; }
    BusId far_end() const { return branch_.other_end(reference_end_); }

    LineParams line() const { return {values_[kResistance], values_[kReactance], values_[kSusceptance]}; }
    Phasor far_voltage_ratio() const { return {values_[kFarVoltageRe], values_[kFarVoltageIm]}; }
    Phasor ref_current_ratio() const { return {values_[kRefCurrentRe], values_[kRefCurrentIm]}; }
    Phasor far_current_ratio() const { return {values_[kFarCurrentRe], values_[kFarCurrentIm]}; }

    /// Line-parameter invariants plus ratio magnitudes inside (0.5, 1.5).
    bool plausible() const;

private:
    BranchId branch_{};
    BusId reference_end_ = 0;
    Psi9 values_ = Psi9::Zero();
};

/// One time instant of the four channels monitoring a line.
struct PhasorSample {
    Phasor v_from;
    Phasor v_to;
    Phasor i_from;
    Phasor i_to;
};

inline constexpr std::size_t kMinSamples = 3;

struct BranchMeasurements {
    BranchId branch;
    std::vector<PhasorSample> samples;

    std::size_t size() const { return samples.size(); }
    /// Throws InputError on fewer than `min_samples` records or non-finite data.
    void validate(std::size_t min_samples = kMinSamples) const;
    /// Copy of `count` consecutive samples starting at `begin`.
    BranchMeasurements window(std::size_t begin, std::size_t count) const;
    /// Same data with the from/to roles exchanged so `bus` becomes the from end.
    BranchMeasurements oriented_from(BusId bus) const;
    std::vector<Phasor> voltage_at(BusId bus) const;
    std::vector<Phasor> current_at(BusId bus) const;
};

/// Currents entering one bus: the incident monitored lines plus the
/// aggregate of every other inflow, measured through its own CT.
struct BusCurrentSet {
    BusId bus = 0;
    std::vector<BranchId> branches;
    std::vector<std::vector<Phasor>> branch_currents;
    std::vector<Phasor> residual_current;
};

struct AccuracyClasses {
    double vt_from = 0.6;
    double vt_to = 0.6;
    double ct_from = 0.6;
    double ct_to = 0.6;
};

struct BusSpec {
    BusId id = 0;
    /// Base-case net current injected into the bus from outside the network.
    Phasor injection{0.0, 0.0};
    bool slack = false;
    Phasor slack_voltage{1.0, 0.0};
};

struct BranchSpec {
    BranchId id;
    LineParams params;
    AccuracyClasses classes;
    /// Monitored lines carry PMUs at both ends and form the connected tree.
    bool monitored = true;
};

struct NetworkSpec {
    std::string name = "network";
    double base_mva = 100.0;
    double base_kv = 345.0;
    std::vector<BusSpec> buses;
    std::vector<BranchSpec> branches;
    BranchId rqm_branch;
    BusId rqm_end = 0;

    const BranchSpec& branch(const BranchId& id) const;
    const BusSpec& bus(BusId id) const;
    std::vector<BranchSpec> monitored_branches() const;
    /// Structural checks: unique ids, valid line data, one slack bus, the
    /// RQM branch monitored, and the monitored lines connected.
    void validate() const;
};

/// Monitored lines forming a connected subgraph that contains the RQM branch.
struct ConnectedTree {
    std::vector<BusId> buses;
    std::vector<BranchId> branches;
    BranchId rqm_branch;
    BusId rqm_end = 0;

    static ConnectedTree from_network(const NetworkSpec& net);

    /// Index of the branch matching `id` as a physical line.
    std::optional<std::size_t> find(const BranchId& id) const;
    std::vector<BranchId> incident(BusId bus) const;
    void validate() const;
};

/// Shortest chain of lines from the RQM branch to `target`, both included.
/// Ties are broken toward lower bus ids. Throws TopologyError if the target
/// is not a tree branch or cannot be reached.
std::vector<BranchId> find_path(const ConnectedTree& tree, const BranchId& target);

}  // namespace netslic
