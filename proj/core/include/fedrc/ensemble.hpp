#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedrc/model.hpp"

namespace fedrc {

// Theta = [theta_1, ..., theta_K] plus the active/removed flag of each cluster.
// Removed clusters keep their index (indices are stable) but are skipped by
// every update and every sum.
struct ClusterEnsemble {
    ModelSpec spec;
    std::vector<ParamVector> params;
    std::vector<std::uint8_t> active;

    std::size_t size() const noexcept { return params.size(); }
    bool is_active(std::size_t k) const { return active[k] != 0; }
    std::size_t num_active() const;
    std::vector<std::size_t> active_indices() const;

    // K models from independent "init" streams; with a shared trunk every
    // cluster starts from cluster 0's trunk.
    static ClusterEnsemble initialize(const Model& model, std::size_t clusters, std::uint64_t seed);

    // Throws ConfigError if the ensemble does not match the model or has no
    // active cluster.
    void validate(const Model& model) const;

    // True if the trunk slices of all active clusters are bit-identical.
    bool trunk_shared(const Model& model) const;

    friend bool operator==(const ClusterEnsemble&, const ClusterEnsemble&) = default;
};

}  // namespace fedrc
