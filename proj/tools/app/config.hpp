#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedrc/baselines.hpp"
#include "fedrc/fed_sim.hpp"
#include "fedrc/model.hpp"
#include "fedrc/rc_engine.hpp"
#include "fedrc/scenario.hpp"

namespace fedrc::app {

// Where the scenario of an experiment comes from.
struct ScenarioSource {
    enum class Kind { generate, directory, tabular } kind = Kind::generate;
    std::filesystem::path path;  // directory (written scenario) or tabular file
    TabularSchema schema;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::optional<BaselineKind> algorithm;
    std::filesystem::path output_dir;
    std::string preset;
    ScenarioConfig scenario;
    ScenarioSource source;
    ModelSpec model;  // input_dim / num_classes come from the scenario
    FedConfig fed;
    RCHyper rc;
};

struct ConfigRequest {
    std::optional<std::filesystem::path> file;
    std::string preset;                  // --preset, overrides the file's scenario.preset
    std::vector<std::string> overrides;  // --set key=value, applied last
    bool need_algorithm = false;
    bool need_output_dir = true;
};

// INI file (top-level keys seed, algorithm, output_dir; sections [scenario],
// [model], [fed], [rc]) < preset < overrides. Unknown keys and missing
// required fields raise ConfigError naming the key.
ExperimentConfig load_config(const ConfigRequest& request);

// Resolved configuration in the same INI layout.
std::string to_ini(const ExperimentConfig& config);

FederatedScenario build_scenario(const ExperimentConfig& config);

}  // namespace fedrc::app
