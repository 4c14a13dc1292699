#pragma once

#include <filesystem>

#include "fedrc/baselines.hpp"
#include "fedrc/ensemble.hpp"
#include "fedrc/fed_sim.hpp"
#include "fedrc/rc_engine.hpp"

namespace fedrc::app {

// Everything compose/eval need from a finished training run.
struct RunState {
    BaselineKind algorithm = BaselineKind::fedrc;
    std::size_t rounds = 0;
    FedConfig fed;  // only the new-client adaptation fields are stored
    ClusterEnsemble ensemble;
    AssignmentState assignment;
    LabelStats stats;
};

void write_run_state(const RunState& state, const std::filesystem::path& file);
RunState read_run_state(const std::filesystem::path& file);

}  // namespace fedrc::app
