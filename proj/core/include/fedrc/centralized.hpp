#pragma once

#include <cstddef>
#include <vector>

#include "fedrc/data.hpp"
#include "fedrc/ensemble.hpp"
#include "fedrc/model.hpp"
#include "fedrc/rc_engine.hpp"

namespace fedrc {

// Full-batch alternating optimization over pooled data: E-step on (gamma,
// omega), gradient M-step on theta, label statistics refreshed from the new
// gamma for the next iteration.
class CentralizedSolver {
public:
    struct Step {
        // Objective before and after the E+M update, both evaluated with the
        // label statistics that the update used.
        double objective_before = 0.0;
        double objective_after = 0.0;
        Diagnostics diagnostics;
    };

    CentralizedSolver(Model model, std::vector<Dataset> data, ClusterEnsemble ensemble,
                      RCHyper hyper, std::size_t workers = 1);

    // Keep the cold-start statistics for the whole run instead of refreshing
    // them after every iteration.
    void freeze_stats(bool frozen) { frozen_ = frozen; }

    Step iterate(double eta);
    double current_objective() const;

    const Model& model() const noexcept { return model_; }
    const std::vector<Dataset>& data() const noexcept { return data_; }
    const ClusterEnsemble& ensemble() const noexcept { return ensemble_; }
    const AssignmentState& assignment() const noexcept { return state_; }
    const LabelStats& stats() const noexcept { return stats_; }

private:
    Model model_;
    std::vector<Dataset> data_;
    ClusterEnsemble ensemble_;
    RCHyper hyper_;
    std::size_t workers_;
    AssignmentState state_;
    LabelStats stats_;
    bool frozen_ = false;
};

}  // namespace fedrc
