#include "netslic/model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>

#include "netslic/errors.hpp"

namespace netslic {

std::optional<BusId> BranchId::shared_bus(const BranchId& o) const {
    if (same_line(o)) return std::nullopt;
    if (o.touches(from)) return from;
    if (o.touches(to)) return to;
    return std::nullopt;
}

std::string to_string(const BranchId& b) {
    return "(" + std::to_string(b.from) + "," + std::to_string(b.to) + ")";
}

void LineParams::validate() const {
    if (!std::isfinite(r) || !std::isfinite(x) || !std::isfinite(b))
        throw InputError("line parameters must be finite");
    if (x <= 0.0) throw InputError("line reactance must be positive");
    if (r < 0.0) throw InputError("line resistance must be non-negative");
    if (b < 0.0) throw InputError("line susceptance must be non-negative");
}

void CorrectionFactors::validate() const {
    for (Phasor cf : {alpha_from, alpha_to, beta_from, beta_to}) {
        if (!is_finite(cf)) throw InputError("correction factor is not finite");
        const double m = std::abs(cf);
        if (m <= 0.5 || m >= 1.5) throw InputError("correction factor magnitude outside (0.5, 1.5)");
    }
}

PsiVector::PsiVector(BranchId branch, BusId reference_end, const Psi9& values)
    : branch_(branch), reference_end_(reference_end), values_(values) {
    if (!branch.touches(reference_end))
        throw InputError("reference bus " + std::to_string(reference_end) + " is not an end of " +
                         to_string(branch));
    if (!values.allFinite()) throw InputError("psi vector has non-finite entries");
}

PsiVector PsiVector::from_parts(BranchId branch, BusId reference_end, const LineParams& line,
                                Phasor far_voltage, Phasor ref_current, Phasor far_current) {
    Psi9 v;
    v << line.r, line.x, line.b, far_voltage.real(), far_voltage.imag(), ref_current.real(),
        ref_current.imag(), far_current.real(), far_current.imag();
    return PsiVector(branch, reference_end, v);
}

bool PsiVector::plausible() const {
    const LineParams lp = line();
    if (!(lp.x > 0.0 && lp.r >= 0.0 && lp.b >= 0.0)) return false;
    for (Phasor c : {far_voltage_ratio(), ref_current_ratio(), far_current_ratio()}) {
        const double m = std::abs(c);
        if (m <= 0.5 || m >= 1.5) return false;
    }
    return true;
}

void BranchMeasurements::validate(std::size_t min_samples) const {
    if (samples.size() < min_samples)
        throw InputError("branch " + to_string(branch) + " has " + std::to_string(samples.size()) +
                         " samples, need at least " + std::to_string(min_samples));
    for (std::size_t t = 0; t < samples.size(); ++t) {
        const auto& s = samples[t];
        if (!is_finite(s.v_from) || !is_finite(s.v_to) || !is_finite(s.i_from) || !is_finite(s.i_to))
            throw InputError("branch " + to_string(branch) + " sample " + std::to_string(t) +
                             " is not finite");
    }
}

BranchMeasurements BranchMeasurements::window(std::size_t begin, std::size_t count) const {
    if (begin + count > samples.size())
        throw InputError("window [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") exceeds " + std::to_string(samples.size()) + " samples of " +
                         to_string(branch));
    BranchMeasurements out{branch, {}};
    out.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                       samples.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return out;
}

BranchMeasurements BranchMeasurements::oriented_from(BusId bus) const {
    if (!branch.touches(bus))
        throw TopologyError("bus " + std::to_string(bus) + " is not an end of " + to_string(branch));
    if (bus == branch.from) return *this;
    BranchMeasurements out{branch.reversed(), {}};
    out.samples.reserve(samples.size());
    for (const auto& s : samples) out.samples.push_back({s.v_to, s.v_from, s.i_to, s.i_from});
    return out;
}

std::vector<Phasor> BranchMeasurements::voltage_at(BusId bus) const {
    if (!branch.touches(bus))
        throw TopologyError("bus " + std::to_string(bus) + " is not an end of " + to_string(branch));
    std::vector<Phasor> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(bus == branch.from ? s.v_from : s.v_to);
    return out;
}

std::vector<Phasor> BranchMeasurements::current_at(BusId bus) const {
    if (!branch.touches(bus))
        throw TopologyError("bus " + std::to_string(bus) + " is not an end of " + to_string(branch));
    std::vector<Phasor> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(bus == branch.from ? s.i_from : s.i_to);
    return out;
}

const BranchSpec& NetworkSpec::branch(const BranchId& id) const {
    for (const auto& b : branches)
        if (b.id.same_line(id)) return b;
    throw TopologyError("branch " + to_string(id) + " not in network '" + name + "'");
}

const BusSpec& NetworkSpec::bus(BusId id) const {
    for (const auto& b : buses)
        if (b.id == id) return b;
    throw TopologyError("bus " + std::to_string(id) + " not in network '" + name + "'");
}

std::vector<BranchSpec> NetworkSpec::monitored_branches() const {
    std::vector<BranchSpec> out;
    for (const auto& b : branches)
        if (b.monitored) out.push_back(b);
    return out;
}

void NetworkSpec::validate() const {
    std::set<BusId> ids;
    int slack_count = 0;
    for (const auto& b : buses) {
        if (!ids.insert(b.id).second) throw InputError("duplicate bus id " + std::to_string(b.id));
        if (!is_finite(b.injection) || !is_finite(b.slack_voltage))
            throw InputError("bus " + std::to_string(b.id) + " has non-finite data");
        if (b.slack) ++slack_count;
    }
    if (slack_count != 1) throw InputError("network needs exactly one slack bus");
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const auto& br = branches[i];
        if (br.id.from == br.id.to) throw InputError("branch " + to_string(br.id) + " is a self loop");
        if (!ids.count(br.id.from) || !ids.count(br.id.to))
            throw InputError("branch " + to_string(br.id) + " references an unknown bus");
        br.params.validate();
        for (double c : {br.classes.vt_from, br.classes.vt_to, br.classes.ct_from, br.classes.ct_to})
            if (!(c > 0.0)) throw InputError("accuracy class must be positive on " + to_string(br.id));
        for (std::size_t j = 0; j < i; ++j)
            if (branches[j].id.same_line(br.id))
                throw InputError("duplicate branch " + to_string(br.id));
    }
    const BranchSpec& rqm = branch(rqm_branch);
    if (!rqm.monitored) throw InputError("RQM branch must be monitored");
    if (!rqm_branch.touches(rqm_end)) throw InputError("RQM end is not a bus of the RQM branch");
    ConnectedTree::from_network(*this).validate();
}

ConnectedTree ConnectedTree::from_network(const NetworkSpec& net) {
    ConnectedTree tree;
    std::set<BusId> buses;
    for (const auto& b : net.branches) {
        if (!b.monitored) continue;
        tree.branches.push_back(b.id);
        buses.insert(b.id.from);
        buses.insert(b.id.to);
    }
    tree.buses.assign(buses.begin(), buses.end());
    tree.rqm_branch = net.rqm_branch;
    // Keep the RQM branch oriented as declared in the branch list.
    if (auto idx = tree.find(net.rqm_branch)) tree.rqm_branch = tree.branches[*idx];
    tree.rqm_end = net.rqm_end;
    return tree;
}

std::optional<std::size_t> ConnectedTree::find(const BranchId& id) const {
    for (std::size_t i = 0; i < branches.size(); ++i)
        if (branches[i].same_line(id)) return i;
    return std::nullopt;
}

std::vector<BranchId> ConnectedTree::incident(BusId bus) const {
    std::vector<BranchId> out;
    for (const auto& b : branches)
        if (b.touches(bus)) out.push_back(b);
    return out;
}

void ConnectedTree::validate() const {
    if (branches.empty()) throw TopologyError("connected tree has no branches");
    if (!find(rqm_branch)) throw TopologyError("RQM branch " + to_string(rqm_branch) + " not in tree");
    if (!rqm_branch.touches(rqm_end)) throw TopologyError("RQM end is not a bus of the RQM branch");
    // Every bus must be reachable from the RQM end.
    std::map<BusId, std::vector<BusId>> adj;
    for (const auto& b : branches) {
        adj[b.from].push_back(b.to);
        adj[b.to].push_back(b.from);
    }
    std::set<BusId> seen{rqm_end};
    std::deque<BusId> queue{rqm_end};
    while (!queue.empty()) {
        BusId u = queue.front();
        queue.pop_front();
        for (BusId v : adj[u])
            if (seen.insert(v).second) queue.push_back(v);
    }
    for (BusId bus : buses)
        if (!seen.count(bus))
            throw TopologyError("bus " + std::to_string(bus) + " is not connected to the RQM branch");
}

std::vector<BranchId> find_path(const ConnectedTree& tree, const BranchId& target) {
    auto target_idx = tree.find(target);
    if (!target_idx) throw TopologyError("branch " + to_string(target) + " is not in the tree");
    auto start_idx = tree.find(tree.rqm_branch);
    if (!start_idx) throw TopologyError("RQM branch is not in the tree");

    // BFS over lines; neighbours are visited in (shared bus, far bus) order.
    const std::size_t m = tree.branches.size();
    std::vector<std::ptrdiff_t> parent(m, -1);
    std::vector<bool> seen(m, false);
    std::deque<std::size_t> queue{*start_idx};
    seen[*start_idx] = true;
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        if (u == *target_idx) break;
        std::vector<std::tuple<BusId, BusId, std::size_t>> next;
        for (std::size_t v = 0; v < m; ++v) {
            if (seen[v]) continue;
            auto shared = tree.branches[u].shared_bus(tree.branches[v]);
            if (!shared) continue;
            next.emplace_back(*shared, tree.branches[v].other_end(*shared), v);
        }
        std::sort(next.begin(), next.end());
        for (const auto& [bus, far, v] : next) {
            seen[v] = true;
            parent[v] = static_cast<std::ptrdiff_t>(u);
            queue.push_back(v);
        }
    }
    if (!seen[*target_idx])
        throw TopologyError("branch " + to_string(target) + " is unreachable from the RQM branch");

    std::vector<BranchId> path;
    for (auto v = static_cast<std::ptrdiff_t>(*target_idx); v >= 0; v = parent[static_cast<std::size_t>(v)])
        path.push_back(tree.branches[static_cast<std::size_t>(v)]);
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace netslic
