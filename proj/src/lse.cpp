#include "netslic/lse.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <ostream>

#include <json.hpp>

#include "netslic/parallel.hpp"

namespace netslic {

namespace {

double degrees(Phasor z) { return std::arg(z) * 180.0 / std::numbers::pi; }

template <typename T>
const T& find_line(const std::map<BranchId, T>& m, const BranchId& id, bool& flipped) {
    if (auto it = m.find(id); it != m.end()) {
        flipped = false;
        return it->second;
    }
    if (auto it = m.find(id.reversed()); it != m.end()) {
        flipped = true;
        return it->second;
    }
    throw TopologyError("no entry for branch " + to_string(id));
}

CorrectionFactors oriented(const CorrectionFactors& cf, bool flipped) {
    if (!flipped) return cf;
    return {cf.alpha_to, cf.alpha_from, cf.beta_to, cf.beta_from};
}

Phasor channel_value(const PhasorSample& s, const BranchId& branch, const Channel& c) {
    const bool from = c.bus == branch.from;
    if (c.current) return from ? s.i_from : s.i_to;
    return from ? s.v_from : s.v_to;
}

}  // namespace

void ObservationModel::validate() const {
    if (buses.empty() || channels.empty()) throw ObservabilityError("empty observation model");
    if (H.rows() != static_cast<Eigen::Index>(channels.size()) || H.cols() != static_cast<Eigen::Index>(buses.size()))
        throw ObservabilityError("observation matrix does not match its channel and state lists");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(H);
    qr.setThreshold(1e-10);
    if (qr.rank() < H.cols())
        throw ObservabilityError("observation matrix has rank " + std::to_string(qr.rank()) + " for " +
                                 std::to_string(H.cols()) + " bus voltages");
}

ObservationModel build_observation_model(const ConnectedTree& tree, const std::vector<BranchMeasurements>& data,
                                         const std::map<BranchId, LineParams>& params,
                                         const std::map<BranchId, CorrectionFactors>& cfs, double sigma_rel) {
    ObservationModel m;
    m.buses = tree.buses;
    std::map<BusId, Eigen::Index> col;
    for (std::size_t k = 0; k < m.buses.size(); ++k) col[m.buses[k]] = static_cast<Eigen::Index>(k);

    const double sigma = std::max(sigma_rel, 1e-6);
    std::vector<std::vector<std::pair<Eigen::Index, Phasor>>> rows;
    std::vector<double> weights;
    for (const BranchId& id : tree.branches) {
        const BranchMeasurements* meas = nullptr;
        for (const auto& d : data)
            if (d.branch.same_line(id)) meas = &d;
        if (!meas) throw ObservabilityError("no measurements for branch " + to_string(id));
        if (meas->samples.empty()) throw ObservabilityError("branch " + to_string(id) + " has no samples");
        const BranchId br = meas->branch;
        if (!col.contains(br.from) || !col.contains(br.to))
            throw ObservabilityError("branch " + to_string(br) + " leaves the tree");

        bool flipped = false;
        const LineParams lp = find_line(params, br, flipped);
        lp.validate();
        CorrectionFactors cf;
        if (!cfs.empty()) cf = oriented(find_line(cfs, br, flipped), flipped);

        const Phasor y = 1.0 / lp.impedance();
        const Phasor ysh{0.0, lp.b};
        const std::array<Channel, 4> chans{Channel{br, br.from, false}, Channel{br, br.to, false},
                                           Channel{br, br.from, true}, Channel{br, br.to, true}};
        const std::array<Phasor, 4> corr{cf.alpha_from, cf.alpha_to, cf.beta_from, cf.beta_to};
        for (int k = 0; k < 4; ++k) {
            const Channel& c = chans[k];
            const Eigen::Index self = col.at(c.bus), other = col.at(br.other_end(c.bus));
            if (c.current)
                rows.push_back({{self, ysh + y}, {other, -y}});
            else
                rows.push_back({{self, Phasor{1.0, 0.0}}});
            double mean_abs = 0.0;
            for (const auto& s : meas->samples) mean_abs += std::abs(channel_value(s, br, c));
            mean_abs /= static_cast<double>(meas->samples.size());
            const double sd = sigma * std::max(mean_abs, 1e-6);
            weights.push_back(1.0 / (sd * sd));
            m.channels.push_back(c);
            m.correction.push_back(corr[k]);
        }
    }

    m.H = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.buses.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (const auto& [c, v] : rows[r]) m.H(static_cast<Eigen::Index>(r), c) += v;
    m.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    m.validate();
    return m;
}

Eigen::VectorXcd channel_values(const ObservationModel& model, const std::vector<BranchMeasurements>& data,
                                std::size_t t) {
    Eigen::VectorXcd z(static_cast<Eigen::Index>(model.channels.size()));
    const BranchMeasurements* meas = nullptr;
    for (std::size_t r = 0; r < model.channels.size(); ++r) {
        const Channel& c = model.channels[r];
        if (!meas || !(meas->branch == c.branch)) {
            meas = nullptr;
            for (const auto& d : data)
                if (d.branch == c.branch) meas = &d;
            if (!meas) throw ObservabilityError("no measurements for branch " + to_string(c.branch));
        }
        if (t >= meas->samples.size()) throw InputError("instant " + std::to_string(t) + " out of range");
        z[static_cast<Eigen::Index>(r)] = channel_value(meas->samples[t], c.branch, c);
    }
    return z;
}

StateEstimator::StateEstimator(ObservationModel model) : model_(std::move(model)) {
    model_.validate();
    const Eigen::MatrixXcd G = model_.H.adjoint() * model_.weights.asDiagonal() * model_.H;
    normal_.compute(G);
    if (normal_.info() != Eigen::Success || normal_.vectorD().real().minCoeff() <= 0.0)
        throw NumericDomainError("singular normal equations in the state estimator");
}

StateEstimate StateEstimator::estimate(const Eigen::VectorXcd& raw) const {
    if (raw.size() != model_.H.rows()) throw InputError("measurement vector does not match the observation model");
    Eigen::VectorXcd z = raw;
    for (Eigen::Index r = 0; r < z.size(); ++r) z[r] *= model_.correction[static_cast<std::size_t>(r)];
    StateEstimate out;
    out.voltages = normal_.solve(model_.H.adjoint() * (model_.weights.asDiagonal() * z));
    out.residual = z - model_.H * out.voltages;
    return out;
}

LseScore score_states(const StateEstimator& est, const Dataset& data) {
    const auto& buses = est.model().buses;
    std::vector<std::size_t> net_index;
    for (BusId b : buses) {
        std::size_t k = 0;
        while (k < data.network.buses.size() && data.network.buses[k].id != b) ++k;
        if (k == data.network.buses.size()) throw TopologyError("bus " + std::to_string(b) + " not in network");
        net_index.push_back(k);
    }
    LseScore s;
    const std::size_t n = data.truth.snapshots.size();
    for (std::size_t t = 0; t < n; ++t) {
        const StateEstimate e = est.estimate(channel_values(est.model(), data.branches, t));
        for (std::size_t k = 0; k < buses.size(); ++k) {
            const Phasor v = data.truth.snapshots[t].voltages[net_index[k]];
            const Phasor vh = e.voltages[static_cast<Eigen::Index>(k)];
            s.are += are(std::abs(vh), std::abs(v));
            s.ae += ae(degrees(vh), degrees(v));
            ++s.count;
        }
    }
    if (s.count) {
        s.are /= static_cast<double>(s.count);
        s.ae /= static_cast<double>(s.count);
    }
    return s;
}

ObservationModel trial_observation_model(const TrialOutput& t, ParamSource params, CfSource cfs, double sigma_rel) {
    std::map<BranchId, LineParams> lp;
    std::map<BranchId, CorrectionFactors> cf;
    for (const BranchId& id : t.data.tree.branches) {
        switch (params) {
            case ParamSource::kLegacy: lp[id] = t.inputs.initial_params(id); break;
            case ParamSource::kEstimated: lp[id] = t.result.at(id).line; break;
            case ParamSource::kTruth: lp[id] = t.data.network.branch(id).params; break;
        }
        switch (cfs) {
            case CfSource::kNone: break;
            case CfSource::kEstimated: {
                const SlicEstimate& e = t.result.at(id);
                cf[id] = oriented(e.cfs, !(e.branch == id));
                break;
            }
            case CfSource::kTruth: cf[id] = t.data.etas.correction_factors(id); break;
        }
    }
    return build_observation_model(t.data.tree, t.data.branches, lp, cf, sigma_rel);
}

LseComparison compare_lse(const TrialOutput& t, double sigma_rel) {
    LseComparison c;
    c.base = score_states(StateEstimator(trial_observation_model(t, ParamSource::kLegacy, CfSource::kNone, sigma_rel)),
                          t.data);
    c.post_slic = score_states(
        StateEstimator(trial_observation_model(t, ParamSource::kEstimated, CfSource::kEstimated, sigma_rel)), t.data);
    return c;
}

LseSummary run_lse_study(const ScenarioConfig& cfg, std::size_t trials, std::uint64_t seed, unsigned jobs) {
    if (trials < 1) throw InputError("state-estimation study needs at least one trial");
    cfg.validate();
    const double sigma_rel = cfg.noise.tve_max / (3.0 * std::sqrt(2.0));
    std::vector<LseComparison> out(trials);
    const auto errors = parallel_for(trials, jobs, [&](std::size_t k) {
        out[k] = compare_lse(run_trial(cfg, trial_seed(seed, k)), sigma_rel);
    });
    for (std::size_t k = 0; k < trials; ++k)
        if (!errors[k].empty()) throw TrialError(k, trial_seed(seed, k), errors[k]);

    LseSummary s;
    s.trials = trials;
    s.seed = seed;
    for (const auto& c : out) {
        s.base.are += c.base.are;
        s.base.ae += c.base.ae;
        s.base.count += c.base.count;
        s.post_slic.are += c.post_slic.are;
        s.post_slic.ae += c.post_slic.ae;
        s.post_slic.count += c.post_slic.count;
    }
    const double n = static_cast<double>(trials);
    s.base.are /= n;
    s.base.ae /= n;
    s.post_slic.are /= n;
    s.post_slic.ae /= n;
    auto gain = [](double before, double after) { return before > 0.0 ? (before - after) / before * 100.0 : 0.0; };
    s.improvement_are_pct = gain(s.base.are, s.post_slic.are);
    s.improvement_ae_pct = gain(s.base.ae, s.post_slic.ae);
    return s;
}

void write_lse_json(std::ostream& os, const LseSummary& s) {
    nlohmann::ordered_json j;
    j["trials"] = s.trials;
    j["seed"] = s.seed;
    j["base"] = {{"are", s.base.are}, {"ae", s.base.ae}};
    j["post_slic"] = {{"are", s.post_slic.are}, {"ae", s.post_slic.ae}};
    j["improvement_pct"] = {{"are", s.improvement_are_pct}, {"ae", s.improvement_ae_pct}};
    os << j.dump(2) << "\n";
}

}  // namespace netslic
