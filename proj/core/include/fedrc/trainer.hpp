#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "fedrc/baselines.hpp"
#include "fedrc/ensemble.hpp"
#include "fedrc/fed_sim.hpp"
#include "fedrc/metrics.hpp"
#include "fedrc/model.hpp"
#include "fedrc/rc_engine.hpp"
#include "fedrc/scenario.hpp"

namespace fedrc {

struct TrainerOptions {
    BaselineKind algorithm = BaselineKind::fedrc;
    FedConfig fed;
    RCHyper rc;
};

// omega a nonparticipating client uses for prediction: E-steps with the
// algorithm's kernel on its adaptation split, or the loss-argmin cluster for
// the hard-clustering baselines.
std::vector<double> adapt_new_client(BaselineKind algorithm, const Model& model,
                                     const ClusterEnsemble& ensemble, const LabelStats& stats,
                                     const Dataset& adaptation, const FedConfig& fed);

// The round loop: optional cluster removal, client sampling, per-client
// E-step and local training, server aggregation, label-statistic refresh and
// the round report. The scenario must outlive the trainer.
class Trainer {
public:
    Trainer(const FederatedScenario& scenario, ModelSpec spec, TrainerOptions options);

    // Report of the current state without training (round 0 before any round).
    RoundReport report() const;
    RoundReport run_round();
    // Round-0 report followed by one report per configured round.
    std::vector<RoundReport> run();

    std::size_t round() const noexcept { return round_; }
    const Model& model() const noexcept { return model_; }
    const ClusterEnsemble& ensemble() const noexcept { return ensemble_; }
    const AssignmentState& assignment() const noexcept { return state_; }
    const LabelStats& stats() const noexcept { return stats_; }
    const TrainerOptions& options() const noexcept { return options_; }
    const FederatedScenario& scenario() const noexcept { return scenario_; }
    std::optional<std::size_t> gamma_converged_round() const noexcept { return converged_round_; }
    const std::vector<std::size_t>& removed_clusters() const noexcept { return removed_; }

    std::vector<double> adapt_new_client(const Dataset& adaptation) const {
        return fedrc::adapt_new_client(options_.algorithm, model_, ensemble_, stats_, adaptation,
                                       options_.fed);
    }

private:
    void refresh_all_contributions(std::string_view stream);
    void rebuild_stats();

    const FederatedScenario& scenario_;
    TrainerOptions options_;
    Model model_;
    std::vector<Dataset> train_;
    ClusterEnsemble ensemble_;
    AssignmentState state_;
    std::vector<ClientLabelMass> contributions_;
    LabelStats stats_;
    std::size_t round_ = 0;
    double last_change_ = 1.0;
    std::size_t last_fallbacks_ = 0;
    std::vector<std::size_t> last_removed_;
    std::optional<std::size_t> converged_round_;
    std::vector<std::size_t> removed_;
};

}  // namespace fedrc
