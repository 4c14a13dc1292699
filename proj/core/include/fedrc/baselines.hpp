#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedrc/fed_sim.hpp"

namespace fedrc {

enum class BaselineKind { fedavg, fedem, ifca, fesem, fedrc };

std::string to_string(BaselineKind kind);
BaselineKind parse_baseline(const std::string& name);
bool is_hard_clustering(BaselineKind kind);

// gamma ∝ omega * exp(-f): the E-step with the likelihood kernel.
Diagnostics fedem_e_step(const Model& model, const Dataset& data, const ClusterEnsemble& ensemble,
                         ClientAssignment& client);

// argmin_k of the mean local loss over active clusters; ties go to the lowest index.
std::size_t select_by_loss(const Model& model, const Dataset& data, const ClusterEnsemble& ensemble);

struct HardRound {
    ClusterEnsemble ensemble;
    std::vector<std::size_t> choice;         // cluster picked by each selected client
    std::vector<ClientUpdate> updates;       // one per selected client
};

// Each selected client picks select_by_loss, trains only that cluster, and the
// server averages per cluster over its adopters with step eta_global.
HardRound ifca_round(const Model& model, const ClusterEnsemble& ensemble,
                     std::span<const Dataset> data, std::span<const std::size_t> selected,
                     const FedConfig& config, std::size_t round);

// Hard EM: same loss-based assignment, then a plain weighted FedAvg within each
// cluster (the new cluster model is the sample-weighted mean of its adopters'
// local models).
HardRound fesem_round(const Model& model, const ClusterEnsemble& ensemble,
                      std::span<const Dataset> data, std::span<const std::size_t> selected,
                      const FedConfig& config, std::size_t round);

// Class predicted by the single cluster with the largest omega (ties: lowest index).
int predict_hard(const Model& model, const ClusterEnsemble& ensemble, std::span<const double> x,
                 std::span<const double> omega);

}  // namespace fedrc
