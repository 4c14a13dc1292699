#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "config.hpp"
#include "fedrc/metrics.hpp"

namespace fedrc::app {

// Writes scenario.json + samples.csv into `out_dir`.
void cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out_dir);

// Writes rounds.csv, summary.json, state.json, config.ini and scenario/ into `out_dir`.
void cmd_train(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

void cmd_compose(const std::filesystem::path& run_dir, Attribute attribute, CompositionMode mode,
                 std::ostream& out);

// Re-evaluates a finished run: accuracy per participating split and per
// nonparticipating client (after adaptation), soft and hard, as JSON.
void cmd_eval(const std::filesystem::path& run_dir, std::size_t workers, std::ostream& out);

}  // namespace fedrc::app
