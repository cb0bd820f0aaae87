#include "netslic/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace netslic {

namespace fs = std::filesystem;

namespace {

Json phasor_json(Phasor z) { return Json::array({z.real(), z.imag()}); }

Phasor phasor_from(const Json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw InputError("field '" + field + "' must be a [re, im] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InputError(std::string("field '") + key + "' has the wrong type");
    }
}

template <typename T>
T require(const Json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw InputError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InputError(where + ": field '" + key + "' has the wrong type");
    }
}

Json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
    if (!out) throw InputError("failed writing " + path.string());
}

double parse_double(const std::string& cell, const fs::path& path, std::size_t line) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw InputError(path.string() + ":" + std::to_string(line) + ": bad number '" + cell + "'");
    return v;
}

/// Numeric rows of a CSV file with the expected header.
std::vector<std::vector<double>> read_csv(const fs::path& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw InputError(path.string() + ":1: expected header '" + header + "'");
    const auto columns = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',') + 1);
    std::vector<std::vector<double>> rows;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(parse_double(cell, path, n));
        if (row.size() != columns)
            throw InputError(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(columns) +
                             " columns");
        rows.push_back(std::move(row));
    }
    return rows;
}

const char* kBranchHeader = "t,ReV_from,ImV_from,ReV_to,ImV_to,ReI_from,ImI_from,ReI_to,ImI_to";
const char* kResidualHeader = "t,ReI,ImI";

Json noise_json(const NoiseConfig& n) {
    return {{"tve_max", n.tve_max},
            {"it_accuracy_regular", n.it_accuracy_regular},
            {"it_accuracy_rqm", n.it_accuracy_rqm},
            {"perfect_rqm", n.perfect_rqm},
            {"angle_deg_per_class", n.angle_deg_per_class}};
}

Json load_json(const LoadScenario& l) {
    return {{"period", l.period},
            {"periods", l.periods},
            {"ramp_fraction", l.ramp_fraction},
            {"fluctuation", l.fluctuation},
            {"angle_fluctuation", l.angle_fluctuation},
            {"correlation", l.correlation},
            {"period_spread", l.period_spread},
            {"slack_fluctuation", l.slack_fluctuation}};
}

Json solver_json(const SolverConfig& s) {
    return {{"lambda", s.lambda},
            {"lambda1", s.lambda1},
            {"max_iters", s.max_iters},
            {"grad_tol", s.grad_tol},
            {"step_tol", s.step_tol},
            {"trust_radius_init", s.trust_radius_init},
            {"trust_shrink", s.trust_shrink},
            {"trust_grow", s.trust_grow},
            {"ratio_accept", s.ratio_accept},
            {"ratio_good", s.ratio_good},
            {"runs", s.runs},
            {"window", s.window},
            {"exact_hessian", s.exact_hessian}};
}

Json cf_json(const CorrectionFactors& cf) {
    return {{"alpha_from", phasor_json(cf.alpha_from)},
            {"alpha_to", phasor_json(cf.alpha_to)},
            {"beta_from", phasor_json(cf.beta_from)},
            {"beta_to", phasor_json(cf.beta_to)}};
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

Json network_to_json(const NetworkSpec& net) {
    Json j;
    j["name"] = net.name;
    j["base_mva"] = net.base_mva;
    j["base_kv"] = net.base_kv;
    j["buses"] = Json::array();
    for (const auto& b : net.buses) {
        Json e{{"id", b.id}, {"injection", phasor_json(b.injection)}};
        if (b.slack) {
            e["slack"] = true;
            e["slack_voltage"] = phasor_json(b.slack_voltage);
        }
        j["buses"].push_back(e);
    }
    j["branches"] = Json::array();
    for (const auto& b : net.branches) {
        j["branches"].push_back({{"from", b.id.from},
                                 {"to", b.id.to},
                                 {"r", b.params.r},
                                 {"x", b.params.x},
                                 {"b", b.params.b},
                                 {"monitored", b.monitored},
                                 {"accuracy_class_vt_from", b.classes.vt_from},
                                 {"accuracy_class_vt_to", b.classes.vt_to},
                                 {"accuracy_class_ct_from", b.classes.ct_from},
                                 {"accuracy_class_ct_to", b.classes.ct_to}});
    }
    j["rqm_branch"] = Json::array({net.rqm_branch.from, net.rqm_branch.to});
    j["rqm_end"] = net.rqm_end;
    return j;
}

NetworkSpec network_from_json(const Json& j) {
    if (!j.is_object()) throw InputError("network spec must be a JSON object");
    NetworkSpec net;
    net.name = get_or<std::string>(j, "name", net.name);
    net.base_mva = get_or<double>(j, "base_mva", net.base_mva);
    net.base_kv = get_or<double>(j, "base_kv", net.base_kv);
    if (!j.contains("buses") || !j["buses"].is_array()) throw InputError("network spec needs a 'buses' array");
    if (!j.contains("branches") || !j["branches"].is_array())
        throw InputError("network spec needs a 'branches' array");
    for (std::size_t k = 0; k < j["buses"].size(); ++k) {
        const Json& e = j["buses"][k];
        const std::string where = "buses[" + std::to_string(k) + "]";
        BusSpec b;
        b.id = require<BusId>(e, "id", where);
        if (e.contains("injection")) b.injection = phasor_from(e["injection"], where + ".injection");
        b.slack = get_or<bool>(e, "slack", false);
        if (e.contains("slack_voltage")) b.slack_voltage = phasor_from(e["slack_voltage"], where + ".slack_voltage");
        net.buses.push_back(b);
    }
    for (std::size_t k = 0; k < j["branches"].size(); ++k) {
        const Json& e = j["branches"][k];
        const std::string where = "branches[" + std::to_string(k) + "]";
        BranchSpec b;
        b.id = {require<BusId>(e, "from", where), require<BusId>(e, "to", where)};
        b.params = {require<double>(e, "r", where), require<double>(e, "x", where), require<double>(e, "b", where)};
        b.monitored = get_or<bool>(e, "monitored", true);
        b.classes.vt_from = get_or<double>(e, "accuracy_class_vt_from", b.classes.vt_from);
        b.classes.vt_to = get_or<double>(e, "accuracy_class_vt_to", b.classes.vt_to);
        b.classes.ct_from = get_or<double>(e, "accuracy_class_ct_from", b.classes.ct_from);
        b.classes.ct_to = get_or<double>(e, "accuracy_class_ct_to", b.classes.ct_to);
        net.branches.push_back(b);
    }
    const auto rqm = require<std::vector<BusId>>(j, "rqm_branch", "network spec");
    if (rqm.size() != 2) throw InputError("network spec: 'rqm_branch' must list two buses");
    net.rqm_branch = {rqm[0], rqm[1]};
    net.rqm_end = require<BusId>(j, "rqm_end", "network spec");
    net.validate();
    return net;
}

NetworkSpec load_network(const fs::path& path) {
    try {
        return network_from_json(read_json(path));
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    } catch (const TopologyError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void save_network(const fs::path& path, const NetworkSpec& net) {
    write_text(path, network_to_json(net).dump(2) + "\n");
}

ScenarioConfig config_from_json(const Json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw InputError("config must be a JSON object");
    const Scenario s = parse_scenario(get_or<std::string>(j, "scenario", "realistic"));
    ScenarioConfig c = ScenarioConfig::preset(s);
    if (j.contains("network")) {
        const Json& n = j["network"];
        if (n.is_string()) {
            fs::path p = n.get<std::string>();
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            c.network = load_network(p);
        } else {
            c.network = network_from_json(n);
        }
    }
    if (j.contains("noise")) {
        const Json& n = j["noise"];
        c.noise.tve_max = get_or(n, "tve_max", c.noise.tve_max);
        c.noise.it_accuracy_regular = get_or(n, "it_accuracy_regular", c.noise.it_accuracy_regular);
        c.noise.it_accuracy_rqm = get_or(n, "it_accuracy_rqm", c.noise.it_accuracy_rqm);
        c.noise.perfect_rqm = get_or(n, "perfect_rqm", c.noise.perfect_rqm);
        c.noise.angle_deg_per_class = get_or(n, "angle_deg_per_class", c.noise.angle_deg_per_class);
    }
    if (j.contains("load")) {
        const Json& l = j["load"];
        c.load.period = get_or(l, "period", c.load.period);
        c.load.periods = get_or(l, "periods", c.load.periods);
        c.load.ramp_fraction = get_or(l, "ramp_fraction", c.load.ramp_fraction);
        c.load.fluctuation = get_or(l, "fluctuation", c.load.fluctuation);
        c.load.angle_fluctuation = get_or(l, "angle_fluctuation", c.load.angle_fluctuation);
        c.load.correlation = get_or(l, "correlation", c.load.correlation);
        c.load.period_spread = get_or(l, "period_spread", c.load.period_spread);
        c.load.slack_fluctuation = get_or(l, "slack_fluctuation", c.load.slack_fluctuation);
    }
    if (j.contains("solver")) {
        const Json& v = j["solver"];
        c.solver.lambda = get_or(v, "lambda", c.solver.lambda);
        c.solver.lambda1 = get_or(v, "lambda1", c.solver.lambda1);
        c.solver.max_iters = get_or(v, "max_iters", c.solver.max_iters);
        c.solver.grad_tol = get_or(v, "grad_tol", c.solver.grad_tol);
        c.solver.step_tol = get_or(v, "step_tol", c.solver.step_tol);
        c.solver.trust_radius_init = get_or(v, "trust_radius_init", c.solver.trust_radius_init);
        c.solver.trust_shrink = get_or(v, "trust_shrink", c.solver.trust_shrink);
        c.solver.trust_grow = get_or(v, "trust_grow", c.solver.trust_grow);
        c.solver.ratio_accept = get_or(v, "ratio_accept", c.solver.ratio_accept);
        c.solver.ratio_good = get_or(v, "ratio_good", c.solver.ratio_good);
        c.solver.runs = get_or(v, "runs", c.solver.runs);
        c.solver.window = get_or(v, "window", c.solver.window);
        c.solver.exact_hessian = get_or(v, "exact_hessian", c.solver.exact_hessian);
    }
    c.database_spread = get_or(j, "database_spread", c.database_spread);
    c.validate();
    return c;
}

ScenarioConfig load_config(const fs::path& path) {
    try {
        return config_from_json(read_json(path), path.parent_path());
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

Json config_to_json(const ScenarioConfig& cfg) {
    return {{"scenario", to_string(cfg.scenario)},
            {"network", network_to_json(cfg.network)},
            {"noise", noise_json(cfg.noise)},
            {"load", load_json(cfg.load)},
            {"solver", solver_json(cfg.solver)},
            {"database_spread", cfg.database_spread}};
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const ScenarioConfig& cfg) { return fnv1a_hex(config_to_json(cfg).dump()); }

std::string branch_file_name(const BranchId& id) {
    return "branch_" + std::to_string(id.from) + "_" + std::to_string(id.to) + ".csv";
}

std::string bus_file_name(BusId bus) { return "bus_" + std::to_string(bus) + ".csv"; }

void write_branch_csv(const fs::path& path, const BranchMeasurements& m) {
    std::string out = std::string(kBranchHeader) + "\n";
    for (std::size_t t = 0; t < m.samples.size(); ++t) {
        const auto& s = m.samples[t];
        out += std::to_string(t);
        for (Phasor z : {s.v_from, s.v_to, s.i_from, s.i_to})
            out += "," + format_double(z.real()) + "," + format_double(z.imag());
        out += "\n";
    }
    write_text(path, out);
}

BranchMeasurements read_branch_csv(const fs::path& path, const BranchId& id) {
    BranchMeasurements m{id, {}};
    for (const auto& r : read_csv(path, kBranchHeader))
        m.samples.push_back({{r[1], r[2]}, {r[3], r[4]}, {r[5], r[6]}, {r[7], r[8]}});
    m.validate();
    return m;
}

void write_residual_csv(const fs::path& path, const std::vector<Phasor>& current) {
    std::string out = std::string(kResidualHeader) + "\n";
    for (std::size_t t = 0; t < current.size(); ++t)
        out += std::to_string(t) + "," + format_double(current[t].real()) + "," + format_double(current[t].imag()) +
               "\n";
    write_text(path, out);
}

std::vector<Phasor> read_residual_csv(const fs::path& path) {
    std::vector<Phasor> out;
    for (const auto& r : read_csv(path, kResidualHeader)) out.emplace_back(r[1], r[2]);
    return out;
}

Json truth_to_json(const Dataset& data) {
    Json j;
    j["branches"] = Json::array();
    for (const BranchId& id : data.tree.branches) {
        const BranchEta& e = data.etas.at(id);
        const LineParams p = data.network.branch(id).params;
        j["branches"].push_back({{"from", id.from},
                                 {"to", id.to},
                                 {"r", p.r},
                                 {"x", p.x},
                                 {"b", p.b},
                                 {"eta_v_from", phasor_json(e.v_from)},
                                 {"eta_v_to", phasor_json(e.v_to)},
                                 {"eta_i_from", phasor_json(e.i_from)},
                                 {"eta_i_to", phasor_json(e.i_to)}});
    }
    j["residual"] = Json::array();
    for (const auto& [bus, eta] : data.etas.residual) j["residual"].push_back({{"bus", bus}, {"eta", phasor_json(eta)}});
    return j;
}

Json manifest_to_json(const Manifest& m) {
    return {{"command", m.command},
            {"scenario", m.scenario},
            {"seed", m.seed},
            {"config_hash", m.config_hash},
            {"files", m.files}};
}

Manifest manifest_from_json(const Json& j) {
    Manifest m;
    m.command = require<std::string>(j, "command", "manifest");
    m.scenario = get_or<std::string>(j, "scenario", "");
    m.seed = require<std::uint64_t>(j, "seed", "manifest");
    m.config_hash = require<std::string>(j, "config_hash", "manifest");
    m.files = get_or<std::vector<std::string>>(j, "files", {});
    return m;
}

Manifest write_dataset(const fs::path& dir, const Dataset& data, const std::map<BranchId, LineParams>& database,
                       const ScenarioConfig& cfg, std::uint64_t seed) {
    fs::create_directories(dir);
    Manifest man;
    man.command = "generate";
    man.scenario = to_string(cfg.scenario);
    man.seed = seed;
    man.config_hash = config_hash(cfg);

    save_network(dir / "network.json", data.network);
    man.files.push_back("network.json");
    for (const auto& m : data.branches) {
        write_branch_csv(dir / branch_file_name(m.branch), m);
        man.files.push_back(branch_file_name(m.branch));
    }
    for (const auto& set : data.buses) {
        write_residual_csv(dir / bus_file_name(set.bus), set.residual_current);
        man.files.push_back(bus_file_name(set.bus));
    }
    write_text(dir / "truth.json", truth_to_json(data).dump(2) + "\n");
    man.files.push_back("truth.json");

    Json db = Json::array();
    for (const auto& [id, p] : database) db.push_back({{"from", id.from}, {"to", id.to}, {"r", p.r}, {"x", p.x}, {"b", p.b}});
    write_text(dir / "database.json", Json{{"branches", db}}.dump(2) + "\n");
    man.files.push_back("database.json");

    Json mj = manifest_to_json(man);
    mj["config"] = config_to_json(cfg);
    write_text(dir / "manifest.json", mj.dump(2) + "\n");
    return man;
}

PipelineInputs read_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw InputError("dataset directory " + dir.string() + " does not exist");
    PipelineInputs in;
    const NetworkSpec net = load_network(dir / "network.json");
    in.tree = ConnectedTree::from_network(net);

    std::vector<std::string> missing;
    for (const BranchId& id : in.tree.branches)
        if (!fs::exists(dir / branch_file_name(id))) missing.push_back(branch_file_name(id));
    for (BusId bus : in.tree.buses)
        if (!fs::exists(dir / bus_file_name(bus))) missing.push_back(bus_file_name(bus));
    if (!fs::exists(dir / "database.json")) missing.push_back("database.json");
    if (!missing.empty()) {
        std::string msg = "dataset " + dir.string() + " is missing:";
        for (const auto& f : missing) msg += " " + f;
        throw InputError(msg);
    }

    for (const BranchId& id : in.tree.branches) in.branches.push_back(read_branch_csv(dir / branch_file_name(id), id));
    const std::size_t n = in.branches.front().size();
    for (const auto& m : in.branches)
        if (m.size() != n) throw InputError("branch files of " + dir.string() + " differ in length");

    for (BusId bus : in.tree.buses) {
        BusCurrentSet set;
        set.bus = bus;
        set.residual_current = read_residual_csv(dir / bus_file_name(bus));
        if (set.residual_current.size() != n)
            throw InputError(bus_file_name(bus) + " has " + std::to_string(set.residual_current.size()) +
                             " rows, expected " + std::to_string(n));
        for (const auto& m : in.branches) {
            if (!m.branch.touches(bus)) continue;
            set.branches.push_back(m.branch);
            set.branch_currents.push_back(m.current_at(bus));
        }
        in.buses.push_back(std::move(set));
    }

    const Json db = read_json(dir / "database.json");
    for (const auto& e : db.at("branches")) {
        const BranchId id{require<BusId>(e, "from", "database.json"), require<BusId>(e, "to", "database.json")};
        LineParams p{require<double>(e, "r", "database.json"), require<double>(e, "x", "database.json"),
                     require<double>(e, "b", "database.json")};
        p.validate();
        in.initial[id] = p;
    }
    for (const BranchId& id : in.tree.branches) (void)in.initial_params(id);
    return in;
}

Json calibration_report(const PipelineResult& res, const Manifest& provenance) {
    Json j;
    j["seed"] = provenance.seed;
    j["config_hash"] = provenance.config_hash;
    j["scenario"] = provenance.scenario;
    j["runs"] = res.runs;
    j["window"] = res.window;
    j["branches"] = Json::array();
    for (const auto& e : res.estimates) {
        Json b{{"from", e.branch.from}, {"to", e.branch.to}, {"r", e.line.r}, {"x", e.line.x}, {"b", e.line.b}};
        b.update(cf_json(e.cfs));
        b["diagnostics"] = {{"iterations", e.diag.iterations},
                            {"grad_norm", e.diag.grad_norm},
                            {"step_norm", e.diag.step_norm},
                            {"constraint_violation", e.diag.constraint_violation},
                            {"objective", e.diag.objective},
                            {"converged", e.diag.converged},
                            {"plausible", e.diag.plausible},
                            {"stop_reason", e.diag.stop_reason}};
        j["branches"].push_back(b);
    }
    j["failures"] = res.failures;
    return j;
}

Json report_to_json(const MetricReport& rep, const std::string& hash) {
    Json j;
    j["scenario"] = rep.scenario;
    j["trials"] = rep.trials;
    j["seed"] = rep.seed;
    j["config_hash"] = hash;
    j["aggregate_error"] = rep.aggregate_error();
    j["max_mare"] = {{"r", rep.max_line_mare('r')},
                     {"x", rep.max_line_mare('x')},
                     {"b", rep.max_line_mare('b')},
                     {"cf_mag", rep.max_cf_mag_mare()},
                     {"cf_ang_deg", rep.max_cf_ang_mae()}};
    j["branches"] = Json::array();
    for (const auto& b : rep.branches) {
        Json e{{"from", b.branch.from}, {"to", b.branch.to}};
        auto stat = [](const ErrorStats& s) { return Json{{"mare", s.mean()}, {"sdare", s.sd()}}; };
        e["r"] = stat(b.r);
        e["x"] = stat(b.x);
        e["b"] = stat(b.b);
        for (int k = 0; k < 4; ++k) {
            e[std::string(cf_slot_name(k)) + "_mag"] = stat(b.cf_mag[k]);
            e[std::string(cf_slot_name(k)) + "_ang_deg"] = stat(b.cf_ang[k]);
        }
        j["branches"].push_back(e);
    }
    return j;
}

}  // namespace netslic
