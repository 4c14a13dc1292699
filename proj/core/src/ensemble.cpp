#include "fedrc/ensemble.hpp"

#include <algorithm>
#include <cstring>

#include "fedrc/error.hpp"

namespace fedrc {

std::size_t ClusterEnsemble::num_active() const {
    return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
}

std::vector<std::size_t> ClusterEnsemble::active_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < active.size(); ++k) {
        if (active[k]) out.push_back(k);
    }
    return out;
}

ClusterEnsemble ClusterEnsemble::initialize(const Model& model, std::size_t clusters,
                                            std::uint64_t seed) {
    if (clusters == 0) throw ConfigError("number of clusters must be positive");
    ClusterEnsemble e;
    e.spec = model.spec();
    e.active.assign(clusters, 1);
    for (std::size_t k = 0; k < clusters; ++k) {
        Rng rng = make_rng(seed, "init", k);
        e.params.push_back(model.initialize(rng));
    }
    if (model.spec().shared_trunk) {
        const std::size_t n = model.trunk_size();
        for (std::size_t k = 1; k < clusters; ++k) {
            std::copy_n(e.params[0].begin(), n, e.params[k].begin());
        }
    }
    return e;
}

void ClusterEnsemble::validate(const Model& model) const {
    if (params.size() != active.size()) throw ConfigError("ensemble params/active size mismatch");
    if (num_active() == 0) throw ConfigError("ensemble has no active cluster");
    for (const auto& p : params) {
        if (p.size() != model.num_params()) throw ConfigError("ensemble parameter length mismatch");
    }
}

bool ClusterEnsemble::trunk_shared(const Model& model) const {
    const std::size_t n = model.trunk_size();
    const ParamVector* ref = nullptr;
    for (std::size_t k = 0; k < size(); ++k) {
        if (!active[k]) continue;
        if (!ref) {
            ref = &params[k];
            continue;
        }
        if (n > 0 && std::memcmp(ref->data(), params[k].data(), n * sizeof(double)) != 0) return false;
    }
    return true;
}

}  // namespace fedrc
