#include "netslic/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include "netslic/networks.hpp"
#include "netslic/parallel.hpp"
#include "netslic/random.hpp"

namespace netslic {

namespace {

constexpr std::uint64_t kDatabaseStream = 4;

double degrees(Phasor z) { return std::arg(z) * 180.0 / std::numbers::pi; }

}  // namespace

double are(double est, double truth) {
    if (truth == 0.0 || !std::isfinite(truth)) throw MetricError("relative error undefined for a zero truth value");
    return std::abs((est - truth) / truth) * 100.0;
}

double wrap_degrees(double deg) {
    double w = std::fmod(deg, 360.0);
    if (w <= -180.0) w += 360.0;
    if (w > 180.0) w -= 360.0;
    return w;
}

double ae(double est_deg, double truth_deg) {
    return std::abs(wrap_degrees(wrap_degrees(est_deg) - wrap_degrees(truth_deg)));
}

Scenario parse_scenario(const std::string& name) {
    if (name == "ideal") return Scenario::kIdeal;
    if (name == "noisy-perfect-rqm") return Scenario::kNoisyPerfectRqm;
    if (name == "realistic") return Scenario::kRealistic;
    if (name == "custom") return Scenario::kCustom;
    throw InputError("unknown scenario '" + name + "' (ideal, noisy-perfect-rqm, realistic, custom)");
}

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::kIdeal: return "ideal";
        case Scenario::kNoisyPerfectRqm: return "noisy-perfect-rqm";
        case Scenario::kRealistic: return "realistic";
        case Scenario::kCustom: return "custom";
    }
    return "custom";
}

NoiseConfig scenario_noise(Scenario s, NoiseConfig base) {
    switch (s) {
        case Scenario::kIdeal:
            base.tve_max = 0.0;
            base.perfect_rqm = true;
            break;
        case Scenario::kNoisyPerfectRqm:
            base.tve_max = 0.001;
            base.perfect_rqm = true;
            break;
        case Scenario::kRealistic:
            base.tve_max = 0.001;
            base.perfect_rqm = false;
            base.it_accuracy_rqm = 0.15;
            base.it_accuracy_regular = 0.6;
            break;
        case Scenario::kCustom: break;
    }
    return base;
}

ScenarioConfig ScenarioConfig::preset(Scenario s) {
    ScenarioConfig c;
    c.network = builtin_network();
    c.scenario = s;
    c.noise = scenario_noise(s);
    return c;
}

void ScenarioConfig::validate() const {
    network.validate();
    noise.validate();
    load.validate();
    solver.validate();
    if (!(database_spread >= 0.0 && database_spread < 1.0)) throw InputError("database spread must lie in [0, 1)");
}

std::map<BranchId, LineParams> database_params(const NetworkSpec& net, double spread, Rng& rng) {
    std::uniform_real_distribution<double> u(-spread, spread);
    std::map<BranchId, LineParams> out;
    for (const auto& b : net.branches) {
        if (!b.monitored) continue;
        LineParams p = b.params;
        p.r *= 1.0 + u(rng);
        p.x *= 1.0 + u(rng);
        p.b *= 1.0 + u(rng);
        out[b.id] = p;
    }
    return out;
}

void ErrorStats::add(double v) {
    ++count;
    sum += v;
    sum_sq += v * v;
    max = std::max(max, v);
}

void ErrorStats::merge(const ErrorStats& o) {
    count += o.count;
    sum += o.sum;
    sum_sq += o.sum_sq;
    max = std::max(max, o.max);
}

double ErrorStats::mean() const { return count ? sum / static_cast<double>(count) : 0.0; }

double ErrorStats::sd() const {
    if (count == 0) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(count) - m * m));
}

const char* cf_slot_name(int slot) {
    static const char* names[] = {"alpha_from", "alpha_to", "beta_from", "beta_to"};
    return names[slot];
}

void BranchMetrics::merge(const BranchMetrics& o) {
    r.merge(o.r);
    x.merge(o.x);
    b.merge(o.b);
    for (int k = 0; k < 4; ++k) {
        cf_mag[k].merge(o.cf_mag[k]);
        cf_ang[k].merge(o.cf_ang[k]);
    }
}

const BranchMetrics& MetricReport::at(const BranchId& id) const {
    for (const auto& b : branches)
        if (b.branch.same_line(id)) return b;
    throw MetricError("report has no branch " + to_string(id));
}

double MetricReport::max_line_mare(char param) const {
    double worst = 0.0;
    for (const auto& b : branches) {
        const ErrorStats& s = param == 'r' ? b.r : param == 'x' ? b.x : b.b;
        worst = std::max(worst, s.mean());
    }
    return worst;
}

double MetricReport::max_line_mare() const {
    return std::max({max_line_mare('r'), max_line_mare('x'), max_line_mare('b')});
}

double MetricReport::max_cf_mag_mare(std::optional<bool> voltage) const {
    double worst = 0.0;
    for (const auto& b : branches)
        for (int k = 0; k < 4; ++k)
            if (!voltage || *voltage == is_voltage_slot(k)) worst = std::max(worst, b.cf_mag[k].mean());
    return worst;
}

double MetricReport::max_cf_ang_mae(std::optional<bool> voltage) const {
    double worst = 0.0;
    for (const auto& b : branches)
        for (int k = 0; k < 4; ++k)
            if (!voltage || *voltage == is_voltage_slot(k)) worst = std::max(worst, b.cf_ang[k].mean());
    return worst;
}

double MetricReport::aggregate_error() const {
    if (branches.empty()) return 0.0;
    double line = 0.0, cf = 0.0;
    for (const auto& b : branches) {
        line += b.r.mean() + b.x.mean() + b.b.mean();
        for (const auto& s : b.cf_mag) cf += s.mean();
    }
    const auto n = static_cast<double>(branches.size());
    return line / (3.0 * n) + cf / (4.0 * n);
}

std::vector<BranchMetrics> score_result(const PipelineResult& res, const Dataset& data) {
    std::vector<BranchMetrics> out;
    for (const BranchId& id : data.tree.branches) {
        const SlicEstimate& e = res.at(id);
        // Estimates may be stored in either orientation; score in the tree's.
        const bool flipped = !(e.branch == id);
        const LineParams truth = data.network.branch(id).params;
        const CorrectionFactors cf_true = data.etas.correction_factors(id);
        CorrectionFactors cf = e.cfs;
        if (flipped) cf = {cf.alpha_to, cf.alpha_from, cf.beta_to, cf.beta_from};

        BranchMetrics m;
        m.branch = id;
        m.r.add(are(e.line.r, truth.r));
        m.x.add(are(e.line.x, truth.x));
        m.b.add(are(e.line.b, truth.b));
        const std::array<Phasor, 4> est{cf.alpha_from, cf.alpha_to, cf.beta_from, cf.beta_to};
        const std::array<Phasor, 4> tru{cf_true.alpha_from, cf_true.alpha_to, cf_true.beta_from, cf_true.beta_to};
        for (int k = 0; k < 4; ++k) {
            m.cf_mag[k].add(are(std::abs(est[k]), std::abs(tru[k])));
            m.cf_ang[k].add(ae(degrees(est[k]), degrees(tru[k])));
        }
        out.push_back(m);
    }
    return out;
}

TrialOutput generate_trial(const ScenarioConfig& cfg, std::uint64_t seed) {
    NoiseConfig noise = cfg.noise;
    noise.rng_seed = seed;
    TrialOutput t;
    t.data = generate_dataset(cfg.network, noise, cfg.load);
    Rng db_rng(split_seed(seed, kDatabaseStream));
    t.inputs.tree = t.data.tree;
    t.inputs.branches = t.data.branches;
    t.inputs.buses = t.data.buses;
    t.inputs.initial = database_params(cfg.network, cfg.database_spread, db_rng);
    return t;
}

TrialOutput run_trial(const ScenarioConfig& cfg, std::uint64_t seed) {
    TrialOutput t = generate_trial(cfg, seed);
    t.result = run_pipeline(t.inputs, cfg.solver);
    return t;
}

std::uint64_t trial_seed(std::uint64_t root, std::size_t k) { return split_seed(root, 1000 + k); }

MetricReport run_monte_carlo(const ScenarioConfig& cfg, std::size_t trials, std::uint64_t seed, unsigned jobs) {
    if (trials < 1) throw InputError("Monte-Carlo run needs at least one trial");
    cfg.validate();

    std::vector<std::vector<BranchMetrics>> scored(trials);
    const auto errors = parallel_for(trials, jobs, [&](std::size_t k) {
        const TrialOutput t = run_trial(cfg, trial_seed(seed, k));
        scored[k] = score_result(t.result, t.data);
    });

    for (std::size_t k = 0; k < trials; ++k)
        if (!errors[k].empty()) throw TrialError(k, trial_seed(seed, k), errors[k]);

    MetricReport rep;
    rep.scenario = to_string(cfg.scenario);
    rep.trials = trials;
    rep.seed = seed;
    rep.branches = scored.front();
    for (std::size_t k = 1; k < trials; ++k)
        for (std::size_t i = 0; i < rep.branches.size(); ++i) rep.branches[i].merge(scored[k][i]);
    return rep;
}

std::vector<SweepRow> sweep_lambda(const std::vector<double>& values, const ScenarioConfig& cfg, std::size_t trials,
                                   std::uint64_t seed, unsigned jobs) {
    std::vector<SweepRow> rows;
    for (double v : values) {
        if (!(v > 0.0) || !std::isfinite(v)) throw InputError("sweep values must be positive and finite");
        ScenarioConfig c = cfg;
        c.solver.lambda = v;
        c.solver.lambda1 = v;
        rows.push_back({v, run_monte_carlo(c, trials, seed, jobs)});
    }
    return rows;
}

void write_report_csv(std::ostream& os, const MetricReport& rep) {
    os << "branch,parameter,mare,sdare,count\n";
    os << std::setprecision(17);
    auto row = [&](const BranchId& id, const std::string& name, const ErrorStats& s) {
        os << id.from << '-' << id.to << ',' << name << ',' << s.mean() << ',' << s.sd() << ',' << s.count << '\n';
    };
    for (const auto& b : rep.branches) {
        row(b.branch, "r", b.r);
        row(b.branch, "x", b.x);
        row(b.branch, "b", b.b);
        for (int k = 0; k < 4; ++k) {
            row(b.branch, std::string(cf_slot_name(k)) + "_mag", b.cf_mag[k]);
            row(b.branch, std::string(cf_slot_name(k)) + "_ang_deg", b.cf_ang[k]);
        }
    }
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "lambda,aggregate,max_r_mare,max_x_mare,max_b_mare,max_cf_mag_mare,max_cf_ang_mae\n";
    os << std::setprecision(17);
    for (const auto& r : rows)
        os << r.lambda << ',' << r.report.aggregate_error() << ',' << r.report.max_line_mare('r') << ','
           << r.report.max_line_mare('x') << ',' << r.report.max_line_mare('b') << ',' << r.report.max_cf_mag_mare()
           << ',' << r.report.max_cf_ang_mae() << '\n';
}

void print_report(std::ostream& os, const MetricReport& rep) {
    os << "scenario " << rep.scenario << ", " << rep.trials << " trial(s), seed " << rep.seed << "\n";
    os << std::left << std::setw(10) << "branch" << std::right;
    for (const char* h : {"r%", "x%", "b%", "|aF|%", "|aT|%", "|bF|%", "|bT|%", "<aF deg", "<aT deg", "<bF deg", "<bT deg"})
        os << std::setw(10) << h;
    os << "\n" << std::scientific << std::setprecision(2);
    for (const auto& b : rep.branches) {
        os << std::left << std::setw(10) << to_string(b.branch) << std::right;
        os << std::setw(10) << b.r.mean() << std::setw(10) << b.x.mean() << std::setw(10) << b.b.mean();
        for (const auto& s : b.cf_mag) os << std::setw(10) << s.mean();
        for (const auto& s : b.cf_ang) os << std::setw(10) << s.mean();
        os << "\n";
    }
    os << std::defaultfloat;
}

}  // namespace netslic
