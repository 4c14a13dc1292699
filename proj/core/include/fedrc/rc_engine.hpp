#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedrc/data.hpp"
#include "fedrc/ensemble.hpp"
#include "fedrc/model.hpp"
#include "fedrc/rng.hpp"

namespace fedrc {

struct RCHyper {
    double eta = 0.1;          // centralized M-step learning rate
    double eps_floor = 1e-12;  // floor on label masses
    bool adam_enabled = false;
    double adam_alpha = 1.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    double adam_eps = 1e-8;

    void validate() const;
};

// gamma_{i,j;k} and omega_{i;k} of one client. Entries of removed clusters are
// exactly zero.
struct ClientAssignment {
    std::size_t num_clusters = 0;
    std::vector<double> gamma;  // samples x clusters, row-major
    std::vector<double> omega;  // clusters
    // Adam moments, same shape as gamma; empty until the first Adam E-step.
    std::vector<double> adam_nu;
    std::vector<double> adam_a;

    std::size_t num_samples() const noexcept {
        return num_clusters == 0 ? 0 : gamma.size() / num_clusters;
    }
    std::span<double> row(std::size_t j) { return {gamma.data() + j * num_clusters, num_clusters}; }
    std::span<const double> row(std::size_t j) const {
        return {gamma.data() + j * num_clusters, num_clusters};
    }

    // gamma = omega = 1/|active| on active clusters.
    static ClientAssignment uniform(std::size_t samples, std::span<const std::uint8_t> active);

    friend bool operator==(const ClientAssignment&, const ClientAssignment&) = default;
};

struct AssignmentState {
    std::size_t num_clusters = 0;
    std::vector<ClientAssignment> clients;

    static AssignmentState uniform(std::span<const Dataset> data, std::span<const std::uint8_t> active);

    friend bool operator==(const AssignmentState&, const AssignmentState&) = default;
};

// Server-side label statistics behind P(y; theta_k):
//   label_mass[k, y] = sum_{i,j} 1{y_ij = y} gamma_{i,j;k}  (optionally noised)
//   total_mass[k]    = sum_{i,j} gamma_{i,j;k}
struct LabelStats {
    std::size_t num_clusters = 0;
    std::size_t num_classes = 0;
    std::vector<double> label_mass;  // clusters x classes
    std::vector<double> total_mass;  // clusters
    double noise_sigma = 0.0;
    double eps_floor = 1e-12;
    std::size_t floored = 0;  // entries raised to eps_floor during aggregation

    double mass(std::size_t k, int y) const {
        return label_mass[k * num_classes + static_cast<std::size_t>(y)];
    }

    friend bool operator==(const LabelStats&, const LabelStats&) = default;
};

// One client's contribution to LabelStats, as transmitted to the server.
struct ClientLabelMass {
    std::vector<double> label_mass;  // clusters x classes
    std::vector<double> total_mass;  // clusters

    friend bool operator==(const ClientLabelMass&, const ClientLabelMass&) = default;
};

struct Diagnostics {
    std::size_t uniform_fallbacks = 0;  // rows reset to uniform after a zero denominator
    std::size_t floored_pairs = 0;      // Ĩ evaluations that hit a floored label mass

    Diagnostics& operator+=(const Diagnostics& o) {
        uniform_fallbacks += o.uniform_fallbacks;
        floored_pairs += o.floored_pairs;
        return *this;
    }
};

// Which kernel weighs the prior omega in the E-step.
enum class EKernel {
    ratio,       // Ĩ = exp(-f) * total_mass[k] / label_mass[k, y]
    likelihood,  // exp(-f), the classical mixture EM kernel
};

// Ĩ(x, y; theta_k) = exp(-f(x, y, theta_k)) * total_mass[k] / label_mass[k, y].
double i_tilde(const Model& model, std::span<const double> x, int y, std::span<const double> theta,
               std::size_t k, const LabelStats& stats, Diagnostics* diag = nullptr);

// ln kernel for every (sample, cluster) of one dataset, samples x clusters
// row-major; removed clusters get -inf.
void log_kernel(const Model& model, const Dataset& data, const ClusterEnsemble& ensemble,
                const LabelStats* stats, EKernel kernel, std::vector<double>& out,
                Diagnostics* diag = nullptr);

// gamma_j ∝ omega_k * exp(log_kernel_jk) over active clusters. A row whose
// weights all vanish falls back to uniform over the active clusters.
Diagnostics responsibilities(std::span<const double> log_kernel, std::span<const double> omega,
                             std::span<const std::uint8_t> active, std::span<double> gamma);

// omega_k = (1/N_i) sum_j gamma_jk, summed in sample order.
void recompute_omega(ClientAssignment& client);

Diagnostics e_step_client(const Model& model, const Dataset& data, const ClusterEnsemble& ensemble,
                          const LabelStats& stats, ClientAssignment& client,
                          EKernel kernel = EKernel::ratio);

Diagnostics e_step(const Model& model, std::span<const Dataset> data,
                   const ClusterEnsemble& ensemble, const LabelStats& stats,
                   AssignmentState& state, std::size_t workers = 1);

// Moves gamma from its previous value toward `target` with Adam on
// g = gamma_prev - target, then clamps at zero and renormalizes each row.
Diagnostics adam_update(ClientAssignment& client, std::span<const double> target,
                        std::span<const std::uint8_t> active, const RCHyper& hyper);

Diagnostics e_step_adam_client(const Model& model, const Dataset& data,
                               const ClusterEnsemble& ensemble, const LabelStats& stats,
                               ClientAssignment& client, const RCHyper& hyper,
                               EKernel kernel = EKernel::ratio);

Diagnostics e_step_adam(const Model& model, std::span<const Dataset> data,
                        const ClusterEnsemble& ensemble, const LabelStats& stats,
                        AssignmentState& state, const RCHyper& hyper, std::size_t workers = 1);

// C_{y,i} = N(0, sigma^2) + sum_j 1{y_ij = y} gamma_{i,j;k} for every active k.
ClientLabelMass client_label_mass(const Dataset& data, const ClientAssignment& client,
                                  std::size_t num_classes, std::span<const std::uint8_t> active,
                                  double noise_sigma, Rng& rng);

// Server sum in client order, clamped at eps_floor on active clusters.
LabelStats aggregate_label_stats(std::span<const ClientLabelMass> parts,
                                 std::span<const std::uint8_t> active, std::size_t num_classes,
                                 double noise_sigma, double eps_floor = 1e-12);

// Client i draws its noise from the "label-noise" stream (noise_seed, i).
LabelStats label_stats(const AssignmentState& state, std::span<const Dataset> data,
                       std::span<const std::uint8_t> active, std::size_t num_classes,
                       double noise_sigma, std::uint64_t noise_seed, double eps_floor = 1e-12);

// (1/N) sum_{i,j} ln(sum_k omega_{i;k} Ĩ(x_ij, y_ij, theta_k)). The Lagrange
// term vanishes because every omega row is normalized.
double objective(const Model& model, const AssignmentState& state, const ClusterEnsemble& ensemble,
                 const LabelStats& stats, std::span<const Dataset> data, std::size_t workers = 1);

// theta_k <- theta_k - eta (1/N) sum_{i,j} gamma_{i,j;k} grad f(x_ij, y_ij, theta_k).
ClusterEnsemble m_step_centralized(const Model& model, const AssignmentState& state,
                                   const ClusterEnsemble& ensemble, std::span<const Dataset> data,
                                   double eta, std::size_t workers = 1);

struct StepSizeEstimate {
    double smoothness = 0.0;     // secant estimate of L
    double grad_sq_bound = 0.0;  // max observed ||grad f||^2
    double eta = 0.0;            // 8 / (40 L + 9 sigma^2)
};

double theorem_step_size(double smoothness, double grad_sq_bound);

StepSizeEstimate estimate_step_size(const Model& model, const ClusterEnsemble& ensemble,
                                    std::span<const Dataset> data, std::uint64_t seed);

}  // namespace fedrc
