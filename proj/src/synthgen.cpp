#include "netslic/synthgen.hpp"

#include <cmath>
#include <numbers>

#include "netslic/errors.hpp"

namespace netslic {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

enum Stream : std::uint64_t { kEtaStream = 1, kLoadStream = 2, kNoiseStream = 3 };

}  // namespace

void NoiseConfig::validate() const {
    if (!(tve_max >= 0.0)) throw InputError("tve_max must be non-negative");
    if (!(it_accuracy_regular > 0.0) || !(it_accuracy_rqm > 0.0))
        throw InputError("accuracy classes must be positive");
    if (!(angle_deg_per_class >= 0.0)) throw InputError("angle_deg_per_class must be non-negative");
}

void LoadScenario::validate() const {
    if (period < kMinSamples) throw InputError("load period needs at least 3 samples");
    if (periods < 1) throw InputError("load scenario needs at least one period");
    if (!(fluctuation >= 0.0) || !(angle_fluctuation >= 0.0))
        throw InputError("fluctuation levels must be non-negative");
    if (!(correlation >= 0.0 && correlation < 1.0)) throw InputError("correlation must lie in [0, 1)");
    if (!(period_spread >= 0.0 && period_spread < 0.5)) throw InputError("period spread must lie in [0, 0.5)");
    if (!(slack_fluctuation >= 0.0 && slack_fluctuation < 0.2)) throw InputError("slack fluctuation must lie in [0, 0.2)");
    if (!(ramp_fraction > -1.0)) throw InputError("ramp fraction must exceed -1");
}

double angle_bound_deg(double accuracy_class, double deg_per_class) { return accuracy_class * deg_per_class; }

Phasor sample_eta(double accuracy_class, double angle_bound, Rng& rng) {
    if (!(accuracy_class > 0.0)) throw InputError("accuracy class must be positive");
    const double spread = accuracy_class / 100.0;
    std::uniform_real_distribution<double> mag(1.0 - spread, 1.0 + spread);
    std::uniform_real_distribution<double> ang(-angle_bound, angle_bound);
    const double m = mag(rng);
    const double a = angle_bound > 0.0 ? ang(rng) : 0.0;
    return std::polar(m, a * kDeg);
}

const BranchEta& EtaAssignment::at(const BranchId& id) const {
    auto it = branches.find(id);
    if (it == branches.end()) it = branches.find(id.reversed());
    if (it == branches.end()) throw TopologyError("no ratio errors recorded for " + to_string(id));
    return it->second;
}

CorrectionFactors EtaAssignment::correction_factors(const BranchId& id) const {
    const BranchEta& e = at(id);
    CorrectionFactors cf{1.0 / e.v_from, 1.0 / e.v_to, 1.0 / e.i_from, 1.0 / e.i_to};
    if (branches.find(id) == branches.end()) {
        std::swap(cf.alpha_from, cf.alpha_to);
        std::swap(cf.beta_from, cf.beta_to);
    }
    return cf;
}

EtaAssignment unit_etas(const ConnectedTree& tree) {
    EtaAssignment out;
    for (const auto& b : tree.branches) out.branches[b] = BranchEta{};
    for (BusId bus : tree.buses) out.residual[bus] = Phasor{1.0, 0.0};
    return out;
}

EtaAssignment draw_etas(const NetworkSpec& net, const NoiseConfig& cfg, Rng& rng) {
    const ConnectedTree tree = ConnectedTree::from_network(net);
    EtaAssignment out;
    auto draw = [&](double cls) { return sample_eta(cls, angle_bound_deg(cls, cfg.angle_deg_per_class), rng); };
    auto draw_rqm = [&]() {
        return cfg.perfect_rqm ? Phasor{1.0, 0.0} : draw(cfg.it_accuracy_rqm);
    };
    for (const auto& spec : net.branches) {
        if (!spec.monitored) continue;
        const bool rqm = spec.id.same_line(net.rqm_branch);
        BranchEta e;
        const bool rqm_from = rqm && spec.id.from == net.rqm_end;
        const bool rqm_to = rqm && spec.id.to == net.rqm_end;
        // Draw order is fixed so regeneration is reproducible.
        e.v_from = rqm_from ? draw_rqm() : draw(spec.classes.vt_from);
        e.v_to = rqm_to ? draw_rqm() : draw(spec.classes.vt_to);
        e.i_from = rqm_from ? draw_rqm() : draw(spec.classes.ct_from);
        e.i_to = rqm_to ? draw_rqm() : draw(spec.classes.ct_to);
        out.branches[spec.id] = e;
    }
    for (BusId bus : tree.buses) out.residual[bus] = draw(cfg.it_accuracy_regular);
    return out;
}

std::pair<Phasor, Phasor> line_currents(const LineParams& lp, Phasor v_from, Phasor v_to) {
    const Phasor z = lp.impedance();
    const Phasor shunt{0.0, lp.b};
    const Phasor series = (v_from - v_to) / z;
    return {shunt * v_from + series, shunt * v_to - series};
}

Eigen::MatrixXcd admittance_matrix(const NetworkSpec& net) {
    std::map<BusId, Eigen::Index> index;
    for (std::size_t i = 0; i < net.buses.size(); ++i) index[net.buses[i].id] = static_cast<Eigen::Index>(i);
    const auto nb = static_cast<Eigen::Index>(net.buses.size());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(nb, nb);
    for (const auto& br : net.branches) {
        br.params.validate();
        const auto f = index.find(br.id.from);
        const auto t = index.find(br.id.to);
        if (f == index.end() || t == index.end()) throw TopologyError("branch " + to_string(br.id) + " names an unknown bus");
        const Phasor ys = 1.0 / br.params.impedance();
        const Phasor shunt{0.0, br.params.b};
        y(f->second, f->second) += ys + shunt;
        y(t->second, t->second) += ys + shunt;
        y(f->second, t->second) -= ys;
        y(t->second, f->second) -= ys;
    }
    return y;
}

void balance_injections(NetworkSpec& net, const std::map<BusId, Phasor>& voltages) {
    const Eigen::MatrixXcd y = admittance_matrix(net);
    const auto nb = static_cast<Eigen::Index>(net.buses.size());
    std::vector<Eigen::Index> fixed, floating;
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(nb);
    for (Eigen::Index i = 0; i < nb; ++i) {
        auto& bus = net.buses[static_cast<std::size_t>(i)];
        const auto it = voltages.find(bus.id);
        if (it != voltages.end()) {
            v[i] = it->second;
            fixed.push_back(i);
            if (bus.slack) bus.slack_voltage = it->second;
        } else if (bus.slack) {
            v[i] = bus.slack_voltage;
            fixed.push_back(i);
        } else {
            floating.push_back(i);
        }
    }
    if (!floating.empty()) {
        const auto nf = static_cast<Eigen::Index>(floating.size());
        Eigen::MatrixXcd a(nf, nf);
        Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(nf);
        for (Eigen::Index i = 0; i < nf; ++i) {
            for (Eigen::Index j = 0; j < nf; ++j) a(i, j) = y(floating[i], floating[j]);
            for (Eigen::Index k : fixed) rhs[i] -= y(floating[i], k) * v[k];
        }
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(a);
        if (!lu.isInvertible()) throw GenerationError("zero-injection buses are not determined by their neighbours");
        const Eigen::VectorXcd vf = lu.solve(rhs);
        for (Eigen::Index i = 0; i < nf; ++i) v[floating[i]] = vf[i];
    }
    const Eigen::VectorXcd inj = y * v;
    for (Eigen::Index i = 0; i < nb; ++i) {
        auto& bus = net.buses[static_cast<std::size_t>(i)];
        bus.injection = bus.slack ? Phasor{} : (voltages.count(bus.id) ? inj[i] : Phasor{});
    }
}

SnapshotSolver::SnapshotSolver(const NetworkSpec& net) : net_(net) {
    const auto nb = static_cast<Eigen::Index>(net.buses.size());
    bool found_slack = false;
    for (Eigen::Index i = 0; i < nb; ++i) {
        const auto& bus = net.buses[static_cast<std::size_t>(i)];
        index_[bus.id] = i;
        if (bus.slack) {
            if (found_slack) throw GenerationError("more than one slack bus");
            slack_ = i;
            found_slack = true;
        } else {
            free_.push_back(i);
        }
    }
    if (!found_slack) throw GenerationError("network has no slack bus");

    ybus_ = admittance_matrix(net);

    const auto nf = static_cast<Eigen::Index>(free_.size());
    Eigen::MatrixXcd yff(nf, nf);
    for (Eigen::Index i = 0; i < nf; ++i)
        for (Eigen::Index j = 0; j < nf; ++j) yff(i, j) = ybus_(free_[i], free_[j]);
    if (nf > 0) {
        Eigen::FullPivLU<Eigen::MatrixXcd> check(yff);
        check.setThreshold(1e-12);
        if (!check.isInvertible()) throw GenerationError("network admittance matrix is singular");
        lu_.compute(yff);
    }
}

Phasor SnapshotSolver::slack_voltage() const { return net_.buses[static_cast<std::size_t>(slack_)].slack_voltage; }

Snapshot SnapshotSolver::solve(std::span<const Phasor> injections) const { return solve(injections, slack_voltage()); }

Snapshot SnapshotSolver::solve(std::span<const Phasor> injections, Phasor v_slack) const {
    const auto nb = static_cast<Eigen::Index>(net_.buses.size());
    if (injections.size() != net_.buses.size())
        throw GenerationError("injection vector does not match bus count");
    if (!is_finite(v_slack) || std::abs(v_slack) <= 0.0) throw GenerationError("slack voltage must be finite and nonzero");
    const auto nf = static_cast<Eigen::Index>(free_.size());
    Eigen::VectorXcd rhs(nf);
    for (Eigen::Index i = 0; i < nf; ++i)
        rhs[i] = injections[static_cast<std::size_t>(free_[i])] - ybus_(free_[i], slack_) * v_slack;

    Snapshot s;
    s.voltages.assign(static_cast<std::size_t>(nb), Phasor{});
    s.voltages[static_cast<std::size_t>(slack_)] = v_slack;
    if (nf > 0) {
        Eigen::VectorXcd v = lu_.solve(rhs);
        for (Eigen::Index i = 0; i < nf; ++i) s.voltages[static_cast<std::size_t>(free_[i])] = v[i];
    }
    for (const auto& br : net_.branches) {
        const Phasor vf = s.voltages[static_cast<std::size_t>(index_.at(br.id.from))];
        const Phasor vt = s.voltages[static_cast<std::size_t>(index_.at(br.id.to))];
        auto [a, b] = line_currents(br.params, vf, vt);
        s.i_from.push_back(a);
        s.i_to.push_back(b);
    }
    return s;
}

double SnapshotSolver::kcl_residual(const Snapshot& s, std::span<const Phasor> injections) const {
    std::vector<Phasor> leaving(net_.buses.size(), Phasor{});
    for (std::size_t k = 0; k < net_.branches.size(); ++k) {
        leaving[static_cast<std::size_t>(index_.at(net_.branches[k].id.from))] += s.i_from[k];
        leaving[static_cast<std::size_t>(index_.at(net_.branches[k].id.to))] += s.i_to[k];
    }
    double worst = 0.0;
    for (Eigen::Index i : free_) {
        const auto u = static_cast<std::size_t>(i);
        worst = std::max(worst, std::abs(leaving[u] - injections[u]));
    }
    return worst;
}

Snapshot solve_snapshot(const NetworkSpec& net, std::span<const Phasor> injections) {
    return SnapshotSolver(net).solve(injections);
}

GridModel::GridModel(const NetworkSpec& net, double source_reactance) : net_(net) {
    if (!(source_reactance > 0.0)) throw InputError("source reactance must be positive");
    const SnapshotSolver base_solver(net);
    std::vector<Phasor> inj;
    for (const auto& b : net.buses) inj.push_back(b.injection);
    base_ = base_solver.solve(inj);
    ybus_ = admittance_matrix(net);

    const Phasor z_src{0.0, source_reactance};
    const std::size_t nb = net.buses.size();
    source_.assign(nb, false);
    device_y_.assign(nb, Phasor{});
    emf_.assign(nb, Phasor{});
    for (std::size_t i = 0; i < nb; ++i) {
        if (net.buses[i].slack) {
            slack_ = static_cast<Eigen::Index>(i);
            continue;
        }
        const Phasor v = base_.voltages[i];
        const Phasor cur = inj[i];
        if (cur == Phasor{}) continue;  // no device: the bus stays injection-free
        if ((v * std::conj(cur)).real() >= 0.0) {
            source_[i] = true;
            device_y_[i] = 1.0 / z_src;
            emf_[i] = v + z_src * cur;
        } else {
            device_y_[i] = -cur / v;
        }
    }
}

Snapshot GridModel::solve(std::span<const Phasor> load_scale, Phasor v_slack) const {
    const std::size_t nb = net_.buses.size();
    if (load_scale.size() != nb) throw GenerationError("load profile does not match bus count");
    if (!is_finite(v_slack) || std::abs(v_slack) <= 0.0) throw GenerationError("slack voltage must be finite and nonzero");

    // Non-slack buses only; the slack voltage moves to the right-hand side.
    const auto nf = static_cast<Eigen::Index>(nb - 1);
    Eigen::MatrixXcd a(nf, nf);
    Eigen::VectorXcd rhs(nf);
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(nb); ++i)
        if (i != slack_) free.push_back(i);
    for (Eigen::Index r = 0; r < nf; ++r) {
        const auto i = static_cast<std::size_t>(free[r]);
        for (Eigen::Index c = 0; c < nf; ++c) a(r, c) = ybus_(free[r], free[c]);
        const Phasor y = source_[i] ? device_y_[i] : device_y_[i] * load_scale[i];
        a(r, r) += y;
        rhs[r] = (source_[i] ? device_y_[i] * emf_[i] : Phasor{}) - ybus_(free[r], slack_) * v_slack;
    }
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(a);
    const Eigen::VectorXcd v = lu.solve(rhs);
    if (!v.allFinite() || (a * v - rhs).norm() > 1e-9 * (1.0 + rhs.norm()))
        throw GenerationError("operating point could not be solved");

    Snapshot s;
    s.voltages.assign(nb, Phasor{});
    s.voltages[static_cast<std::size_t>(slack_)] = v_slack;
    for (Eigen::Index r = 0; r < nf; ++r) s.voltages[static_cast<std::size_t>(free[r])] = v[r];
    std::map<BusId, std::size_t> index;
    for (std::size_t i = 0; i < nb; ++i) index[net_.buses[i].id] = i;
    for (const auto& br : net_.branches) {
        auto [f, t] = line_currents(br.params, s.voltages[index.at(br.id.from)], s.voltages[index.at(br.id.to)]);
        s.i_from.push_back(f);
        s.i_to.push_back(t);
    }
    return s;
}

std::vector<Phasor> GridModel::injections(const Snapshot& s, std::span<const Phasor> load_scale) const {
    std::vector<Phasor> out(net_.buses.size(), Phasor{});
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (static_cast<Eigen::Index>(i) == slack_) continue;
        out[i] = source_[i] ? device_y_[i] * (emf_[i] - s.voltages[i]) : -device_y_[i] * load_scale[i] * s.voltages[i];
    }
    return out;
}

std::vector<std::vector<Phasor>> generate_load_profiles(const NetworkSpec& net, const LoadScenario& load,
                                                        Rng& rng) {
    load.validate();
    const std::size_t nb = net.buses.size();
    const std::size_t n = load.samples();
    const std::size_t p = load.period;
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double innovation = std::sqrt(1.0 - load.correlation * load.correlation);
    std::vector<double> mag(nb), ang(nb);
    for (std::size_t k = 0; k < nb; ++k) {
        mag[k] = load.fluctuation * gauss(rng);
        ang[k] = load.angle_fluctuation * gauss(rng);
    }
    std::vector<std::vector<Phasor>> out(n, std::vector<Phasor>(nb));
    std::vector<double> mix(nb, 1.0);
    for (std::size_t t = 0; t < n; ++t) {
        const double ramp = 1.0 + load.ramp_fraction * double(t % p) / double(p - 1);
        if (t % p == 0 && t > 0)
            for (auto& m : mix) m = std::max(0.2, 1.0 + load.period_spread * gauss(rng));
        for (std::size_t k = 0; k < nb; ++k) {
            if (t > 0) {
                mag[k] = load.correlation * mag[k] + innovation * load.fluctuation * gauss(rng);
                ang[k] = load.correlation * ang[k] + innovation * load.angle_fluctuation * gauss(rng);
            }
            out[t][k] = ramp * mix[k] * std::polar(1.0 + mag[k], ang[k]);
        }
    }
    return out;
}

std::vector<Phasor> generate_slack_voltages(const NetworkSpec& net, const LoadScenario& load, Rng& rng) {
    load.validate();
    Phasor setpoint{1.0, 0.0};
    for (const auto& b : net.buses)
        if (b.slack) setpoint = b.slack_voltage;
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double innovation = std::sqrt(1.0 - load.correlation * load.correlation);
    double swing = load.slack_fluctuation * gauss(rng);
    std::vector<Phasor> out(load.samples());
    for (std::size_t t = 0; t < out.size(); ++t) {
        if (t > 0) swing = load.correlation * swing + innovation * load.slack_fluctuation * gauss(rng);
        out[t] = setpoint * (1.0 + swing);
    }
    return out;
}

TrueSeries generate_true_series(const NetworkSpec& net, const LoadScenario& load, Rng& rng) {
    const std::vector<std::vector<Phasor>> profiles = generate_load_profiles(net, load, rng);
    const std::vector<Phasor> slack = generate_slack_voltages(net, load, rng);
    const GridModel grid(net);
    TrueSeries ts;
    ts.snapshots.reserve(profiles.size());
    ts.injections.reserve(profiles.size());
    for (std::size_t t = 0; t < profiles.size(); ++t) {
        ts.snapshots.push_back(grid.solve(profiles[t], slack[t]));
        ts.injections.push_back(grid.injections(ts.snapshots.back(), profiles[t]));
    }
    return ts;
}

const BranchMeasurements& Dataset::measurements(const BranchId& id) const {
    for (const auto& m : branches)
        if (m.branch.same_line(id)) return m;
    throw TopologyError("no measurements for branch " + to_string(id));
}

const BusCurrentSet& Dataset::bus_currents(BusId bus) const {
    for (const auto& s : buses)
        if (s.bus == bus) return s;
    throw TopologyError("no bus currents for bus " + std::to_string(bus));
}

Dataset true_tree_data(const NetworkSpec& net, const TrueSeries& truth) {
    Dataset d;
    d.network = net;
    d.tree = ConnectedTree::from_network(net);
    d.truth = truth;
    d.etas = unit_etas(d.tree);

    std::vector<std::size_t> tree_index;
    for (std::size_t k = 0; k < net.branches.size(); ++k)
        if (net.branches[k].monitored) tree_index.push_back(k);

    std::map<BusId, std::size_t> bus_pos;
    for (std::size_t i = 0; i < net.buses.size(); ++i) bus_pos[net.buses[i].id] = i;

    for (std::size_t k : tree_index) {
        const BranchId id = net.branches[k].id;
        BranchMeasurements m{id, {}};
        m.samples.reserve(truth.snapshots.size());
        for (const auto& s : truth.snapshots)
            m.samples.push_back({s.voltages[bus_pos.at(id.from)], s.voltages[bus_pos.at(id.to)], s.i_from[k],
                                 s.i_to[k]});
        d.branches.push_back(std::move(m));
    }

    for (BusId bus : d.tree.buses) {
        BusCurrentSet set;
        set.bus = bus;
        set.residual_current.assign(truth.snapshots.size(), Phasor{});
        for (const auto& m : d.branches) {
            if (!m.branch.touches(bus)) continue;
            set.branches.push_back(m.branch);
            set.branch_currents.push_back(m.current_at(bus));
            for (std::size_t t = 0; t < m.size(); ++t) set.residual_current[t] -= set.branch_currents.back()[t];
        }
        d.buses.push_back(std::move(set));
    }
    return d;
}

void apply_composite_noise(Dataset& data, const EtaAssignment& etas, const NoiseConfig& cfg, Rng& rng) {
    cfg.validate();
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double scale = cfg.tve_max / (3.0 * std::sqrt(2.0));
    auto corrupt = [&](Phasor truth, Phasor eta) {
        Phasor out = eta * truth;
        if (scale > 0.0) {
            const double sigma = scale * std::abs(truth);
            const double re = gauss(rng);
            const double im = gauss(rng);
            out += Phasor{sigma * re, sigma * im};
        }
        return out;
    };

    for (auto& m : data.branches) {
        const BranchEta& e = etas.at(m.branch);
        for (auto& s : m.samples) {
            s.v_from = corrupt(s.v_from, e.v_from);
            s.v_to = corrupt(s.v_to, e.v_to);
            s.i_from = corrupt(s.i_from, e.i_from);
            s.i_to = corrupt(s.i_to, e.i_to);
        }
    }
    for (auto& set : data.buses) {
        const Phasor eta = etas.residual.at(set.bus);
        for (auto& v : set.residual_current) v = corrupt(v, eta);
        // Branch currents into the bus are the same CT channels as the line data.
        for (std::size_t j = 0; j < set.branches.size(); ++j)
            set.branch_currents[j] = data.measurements(set.branches[j]).current_at(set.bus);
    }
    data.etas = etas;
}

Dataset generate_dataset(const NetworkSpec& net, const NoiseConfig& cfg, const LoadScenario& load) {
    net.validate();
    cfg.validate();
    Rng eta_rng(split_seed(cfg.rng_seed, kEtaStream));
    Rng load_rng(split_seed(cfg.rng_seed, kLoadStream));
    Rng noise_rng(split_seed(cfg.rng_seed, kNoiseStream));
    const EtaAssignment etas = draw_etas(net, cfg, eta_rng);
    Dataset d = true_tree_data(net, generate_true_series(net, load, load_rng));
    apply_composite_noise(d, etas, cfg, noise_rng);
    return d;
}

}  // namespace netslic
