#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "netslic/eval.hpp"
#include "netslic/model.hpp"
#include "netslic/pipeline.hpp"
#include "netslic/synthgen.hpp"

namespace netslic {

using Json = nlohmann::ordered_json;

/// Shortest decimal form that round-trips (up to 17 significant digits).
std::string format_double(double v);

Json network_to_json(const NetworkSpec& net);
/// Throws InputError naming the offending field.
NetworkSpec network_from_json(const Json& j);
NetworkSpec load_network(const std::filesystem::path& path);
void save_network(const std::filesystem::path& path, const NetworkSpec& net);

/// Scenario configuration file: {"network": path | object, "scenario", "noise",
/// "load", "solver", "database_spread"}. Fields given explicitly override the
/// preset's; a relative network path is resolved against the file's directory.
ScenarioConfig config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
ScenarioConfig load_config(const std::filesystem::path& path);
Json config_to_json(const ScenarioConfig& cfg);

/// 64-bit FNV-1a over the bytes of `s`, as 16 hex digits.
std::string fnv1a_hex(const std::string& s);
/// Hash of the compact JSON form of the configuration.
std::string config_hash(const ScenarioConfig& cfg);

/// Branch file columns: t, ReV_from, ImV_from, ReV_to, ImV_to, ReI_from, ImI_from, ReI_to, ImI_to.
void write_branch_csv(const std::filesystem::path& path, const BranchMeasurements& m);
BranchMeasurements read_branch_csv(const std::filesystem::path& path, const BranchId& id);
/// Residual-current file columns: t, ReI, ImI.
void write_residual_csv(const std::filesystem::path& path, const std::vector<Phasor>& current);
std::vector<Phasor> read_residual_csv(const std::filesystem::path& path);

std::string branch_file_name(const BranchId& id);
std::string bus_file_name(BusId bus);

/// Ground truth of a generated dataset: ratio error per channel and line parameters.
Json truth_to_json(const Dataset& data);

struct Manifest {
    std::string command;
    std::string scenario;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<std::string> files;
};

Json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const Json& j);

/// Writes network.json, one CSV per tree branch and bus, truth.json,
/// database.json and manifest.json into `dir`. Returns the manifest.
Manifest write_dataset(const std::filesystem::path& dir, const Dataset& data,
                       const std::map<BranchId, LineParams>& database, const ScenarioConfig& cfg,
                       std::uint64_t seed);

/// Reads a dataset directory back into pipeline inputs. Throws InputError
/// listing every missing channel file.
PipelineInputs read_dataset(const std::filesystem::path& dir);

/// Per branch {from, to, r, x, b, alpha_from, alpha_to, beta_from, beta_to, diagnostics}.
Json calibration_report(const PipelineResult& res, const Manifest& provenance);

Json report_to_json(const MetricReport& rep, const std::string& config_hash);

}  // namespace netslic
