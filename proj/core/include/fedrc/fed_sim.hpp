#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedrc/data.hpp"
#include "fedrc/ensemble.hpp"
#include "fedrc/model.hpp"
#include "fedrc/rc_engine.hpp"
#include "fedrc/rng.hpp"

namespace fedrc {

struct FedConfig {
    std::size_t rounds = 100;
    std::size_t clusters = 3;
    std::size_t local_steps = 5;   // local iterations per round
    std::size_t local_epochs = 0;  // when > 0, replaces local_steps with epochs over the local data
    std::size_t batch_size = 32;   // 0 = full local batch
    double eta_local = 0.1;
    double eta_global = 1.0;
    double participation = 1.0;  // fraction of clients sampled per round
    bool removal_enabled = false;
    double removal_threshold = 0.05;  // delta
    std::size_t removal_warmup = 20;  // rounds completed before removal is considered
    double convergence_tol = 1e-3;    // max |gamma change| that counts as converged
    double noise_sigma = 0.0;         // std of the noise on transmitted label masses
    std::size_t new_client_estep_cap = 100;
    double new_client_tol = 1e-6;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    void validate() const;
};

struct LocalTrainOptions {
    std::size_t steps = 1;
    std::size_t epochs = 0;
    std::size_t batch_size = 0;  // 0 or >= N_i: full batch
    double eta = 0.1;
    std::size_t client = 0;  // for error messages

    static LocalTrainOptions from(const FedConfig& config, std::size_t client);
    std::size_t steps_for(std::size_t samples) const;
};

// What a client sends back after a round.
struct ClientUpdate {
    std::size_t client = 0;
    std::size_t sample_count = 0;
    // Final local parameters per cluster; empty for clusters it did not train.
    // The transmitted delta is local_params[k] - theta_k.
    std::vector<ParamVector> local_params;
    ClientLabelMass label_mass;
    double gamma_change = 0.0;  // max |gamma_new - gamma_old| over this client's entries
    Diagnostics diagnostics;
};

// ceil(fraction * num_clients) distinct clients, sorted.
std::vector<std::size_t> sample_clients(std::size_t num_clients, double fraction, Rng& rng);

// `steps` iterations of theta <- theta - (eta / |B|) sum_{j in B} gamma_jk grad f
// for every cluster in `train_mask`, sharing one minibatch sequence. With
// batch_size >= N_i each step is the full-batch local update. gamma stays
// fixed. Returns one vector per cluster (empty where the mask is off).
std::vector<ParamVector> local_train(const Model& model, const Dataset& data,
                                     const ClientAssignment& weights, const ClusterEnsemble& start,
                                     std::span<const std::uint8_t> train_mask,
                                     const LocalTrainOptions& options, Rng& rng);

// Single-cluster form: gamma_k holds one weight per sample.
ParamVector local_train(const Model& model, const Dataset& data, std::span<const double> gamma_k,
                        const ParamVector& start, const LocalTrainOptions& options, Rng& rng);

// theta_k <- theta_k + eta_g * sum_i N_i (local_ik - theta_k) / sum_i N_i over
// the clients that trained cluster k; a cluster nobody trained keeps its
// parameters. A lone contributor with eta_g = 1 is adopted as is. With a
// shared trunk the trunk is averaged over every contributing client and
// written to all active clusters.
ClusterEnsemble aggregate(const Model& model, const ClusterEnsemble& ensemble,
                          std::span<const ClientUpdate> updates, double eta_global);

// Mass fraction (1/N) sum_{i,j} gamma_{i,j;k} of every cluster.
std::vector<double> cluster_mass_fractions(const AssignmentState& state);

// Deactivates every active cluster whose mass fraction is below delta (never
// the last one), drops its gamma column, renormalizes the remaining rows and
// recomputes omega. Returns the removed indices.
std::vector<std::size_t> check_and_remove(ClusterEnsemble& ensemble, AssignmentState& state,
                                          double delta);

// Runs E-steps on a new client's adaptation data from uniform weights until
// omega moves less than `tol` or `max_iterations` is reached.
std::vector<double> evaluate_new_client(const Model& model, const Dataset& adaptation,
                                        const ClusterEnsemble& ensemble, const LabelStats& stats,
                                        EKernel kernel, std::size_t max_iterations, double tol);

}  // namespace fedrc
