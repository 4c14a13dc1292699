#include "fedrc/centralized.hpp"

#include <utility>

namespace fedrc {

CentralizedSolver::CentralizedSolver(Model model, std::vector<Dataset> data,
                                     ClusterEnsemble ensemble, RCHyper hyper, std::size_t workers)
    : model_(std::move(model)),
      data_(std::move(data)),
      ensemble_(std::move(ensemble)),
      hyper_(hyper),
      workers_(workers) {
    hyper_.validate();
    ensemble_.validate(model_);
    state_ = AssignmentState::uniform(data_, ensemble_.active);
    stats_ = label_stats(state_, data_, ensemble_.active, model_.num_classes(), 0.0, 0,
                         hyper_.eps_floor);
}

double CentralizedSolver::current_objective() const {
    return objective(model_, state_, ensemble_, stats_, data_, workers_);
}

CentralizedSolver::Step CentralizedSolver::iterate(double eta) {
    Step step;
    step.objective_before = current_objective();
    if (hyper_.adam_enabled) {
        step.diagnostics = e_step_adam(model_, data_, ensemble_, stats_, state_, hyper_, workers_);
    } else {
        step.diagnostics = e_step(model_, data_, ensemble_, stats_, state_, workers_);
    }
    ensemble_ = m_step_centralized(model_, state_, ensemble_, data_, eta, workers_);
    step.objective_after = current_objective();
    if (!frozen_) {
        stats_ = label_stats(state_, data_, ensemble_.active, model_.num_classes(), 0.0, 0,
                             hyper_.eps_floor);
    }
    return step;
}

}  // namespace fedrc
