#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "netslic/eval.hpp"
#include "netslic/io.hpp"
#include "netslic/lse.hpp"
#include "netslic/pipeline.hpp"

namespace fs = std::filesystem;
using namespace netslic;

namespace {

struct RunOptions {
    std::string config;
    std::string scenario;
    std::size_t trials = 100;
    std::uint64_t seed = 42;
    std::optional<double> lambda;
    std::optional<double> lambda1;
    std::string out = "out";
    unsigned jobs = 0;
};

void add_run_options(CLI::App* cmd, RunOptions& o, bool with_trials) {
    cmd->add_option("--config", o.config, "Scenario configuration JSON")->check(CLI::ExistingFile);
    cmd->add_option("--scenario", o.scenario, "Preset: ideal, noisy-perfect-rqm, realistic or custom");
    if (with_trials) cmd->add_option("--trials", o.trials, "Monte-Carlo trials")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "Root seed");
    cmd->add_option("--lambda", o.lambda, "Regularization weight of the RQM branch");
    cmd->add_option("--lambda1", o.lambda1, "Regularization weight of the branch pairs");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--jobs", o.jobs, "Worker threads (0 = all cores)");
}

ScenarioConfig resolve_config(const RunOptions& o) {
    ScenarioConfig c;
    if (!o.config.empty()) {
        Json j;
        {
            std::ifstream in(o.config);
            j = Json::parse(in, nullptr, false);
            if (j.is_discarded()) throw InputError(o.config + ": not valid JSON");
        }
        if (!o.scenario.empty()) j["scenario"] = o.scenario;
        c = config_from_json(j, fs::path(o.config).parent_path());
    } else {
        c = ScenarioConfig::preset(parse_scenario(o.scenario.empty() ? "realistic" : o.scenario));
    }
    if (o.lambda) c.solver.lambda = *o.lambda;
    if (o.lambda1) c.solver.lambda1 = *o.lambda1;
    c.validate();
    return c;
}

void write_json(const fs::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

void write_manifest(const fs::path& dir, const std::string& command, const ScenarioConfig& cfg, std::uint64_t seed,
                    std::vector<std::string> files) {
    Manifest m{command, to_string(cfg.scenario), seed, config_hash(cfg), std::move(files)};
    Json j = manifest_to_json(m);
    j["config"] = config_to_json(cfg);
    write_json(dir / "manifest.json", j);
}

int cmd_generate(const RunOptions& o) {
    const ScenarioConfig cfg = resolve_config(o);
    const TrialOutput t = generate_trial(cfg, o.seed);
    const Manifest m = write_dataset(o.out, t.data, t.inputs.initial, cfg, o.seed);
    std::cout << "wrote " << m.files.size() << " files to " << o.out << " (seed " << o.seed << ", config "
              << m.config_hash << ")\n";
    return 0;
}

int cmd_calibrate(const std::string& dataset, const RunOptions& o) {
    const ScenarioConfig cfg = resolve_config(o);
    const PipelineInputs in = read_dataset(dataset);
    Manifest prov;
    prov.command = "calibrate";
    if (fs::exists(fs::path(dataset) / "manifest.json")) {
        std::ifstream f(fs::path(dataset) / "manifest.json");
        prov = manifest_from_json(Json::parse(f));
    }
    prov.config_hash = config_hash(cfg);

    PipelineResult res;
    int status = 0;
    try {
        res = run_pipeline(in, cfg.solver);
    } catch (const PartialResultError& e) {
        std::cerr << e.what() << "\n";
        res = e.partial();
        status = 2;
    }
    fs::create_directories(o.out);
    const fs::path path = fs::path(o.out) / "calibration.json";
    write_json(path, calibration_report(res, prov));
    std::cout << "calibrated " << res.estimates.size() << " of " << in.tree.branches.size() << " branches -> "
              << path.string() << "\n";
    return status;
}

int cmd_evaluate(const RunOptions& o) {
    const ScenarioConfig cfg = resolve_config(o);
    const MetricReport rep = run_monte_carlo(cfg, o.trials, o.seed, o.jobs);
    fs::create_directories(o.out);
    {
        std::ofstream csv(fs::path(o.out) / "report.csv");
        write_report_csv(csv, rep);
    }
    write_json(fs::path(o.out) / "report.json", report_to_json(rep, config_hash(cfg)));
    write_manifest(o.out, "evaluate", cfg, o.seed, {"report.csv", "report.json"});
    print_report(std::cout, rep);
    std::cout << "aggregate error " << rep.aggregate_error() << "\n";
    return 0;
}

int cmd_sweep(const RunOptions& o, std::vector<double> values) {
    const ScenarioConfig cfg = resolve_config(o);
    if (values.empty()) values = {0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0};
    const auto rows = sweep_lambda(values, cfg, o.trials, o.seed, o.jobs);
    fs::create_directories(o.out);
    {
        std::ofstream csv(fs::path(o.out) / "sweep.csv");
        write_sweep_csv(csv, rows);
    }
    Json j;
    j["seed"] = o.seed;
    j["config_hash"] = config_hash(cfg);
    j["rows"] = Json::array();
    for (const auto& r : rows) j["rows"].push_back({{"lambda", r.lambda}, {"report", report_to_json(r.report, config_hash(cfg))}});
    write_json(fs::path(o.out) / "sweep.json", j);
    write_manifest(o.out, "sweep", cfg, o.seed, {"sweep.csv", "sweep.json"});
    std::cout << "lambda      aggregate\n";
    for (const auto& r : rows) std::cout << std::left << std::setw(12) << r.lambda << r.report.aggregate_error() << "\n";
    return 0;
}

int cmd_lse(const RunOptions& o) {
    const ScenarioConfig cfg = resolve_config(o);
    const LseSummary s = run_lse_study(cfg, o.trials, o.seed, o.jobs);
    fs::create_directories(o.out);
    {
        std::ofstream f(fs::path(o.out) / "lse.json");
        write_lse_json(f, s);
    }
    write_manifest(o.out, "lse", cfg, o.seed, {"lse.json"});
    write_lse_json(std::cout, s);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Line parameter estimation and instrument transformer calibration from synchrophasor data"};
    app.require_subcommand(1);

    RunOptions gen_o, cal_o, eval_o, sweep_o, lse_o;
    lse_o.trials = 30;
    sweep_o.trials = 30;
    std::string dataset;
    std::vector<double> values;

    auto* gen = app.add_subcommand("generate", "Write a synthetic measurement dataset");
    add_run_options(gen, gen_o, false);
    auto* cal = app.add_subcommand("calibrate", "Calibrate every branch of a dataset directory");
    cal->add_option("dataset", dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    add_run_options(cal, cal_o, false);
    auto* ev = app.add_subcommand("evaluate", "Monte-Carlo accuracy report");
    add_run_options(ev, eval_o, true);
    auto* sw = app.add_subcommand("sweep", "Regularization-weight sweep");
    add_run_options(sw, sweep_o, true);
    sw->add_option("--values", values, "Weights to try (default 0.001 ... 1000)");
    auto* ls = app.add_subcommand("lse", "State-estimation accuracy before and after calibration");
    add_run_options(ls, lse_o, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_generate(gen_o);
        if (*cal) return cmd_calibrate(dataset, cal_o);
        if (*ev) return cmd_evaluate(eval_o);
        if (*sw) return cmd_sweep(sweep_o, values);
        if (*ls) return cmd_lse(lse_o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
