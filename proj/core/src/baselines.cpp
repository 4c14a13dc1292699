#include "fedrc/baselines.hpp"

#include <algorithm>
#include <limits>

#include "fedrc/error.hpp"
#include "fedrc/parallel.hpp"

namespace fedrc {

std::string to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::fedavg: return "fedavg";
        case BaselineKind::fedem: return "fedem";
        case BaselineKind::ifca: return "ifca";
        case BaselineKind::fesem: return "fesem";
        case BaselineKind::fedrc: return "fedrc";
    }
    return "?";
}

BaselineKind parse_baseline(const std::string& name) {
    for (auto k : {BaselineKind::fedavg, BaselineKind::fedem, BaselineKind::ifca, BaselineKind::fesem,
                   BaselineKind::fedrc}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown algorithm '" + name + "' (fedrc, fedavg, fedem, ifca, fesem)");
}

bool is_hard_clustering(BaselineKind kind) {
    return kind == BaselineKind::ifca || kind == BaselineKind::fesem;
}

Diagnostics fedem_e_step(const Model& model, const Dataset& data, const ClusterEnsemble& ensemble,
                         ClientAssignment& client) {
    const LabelStats unused;
    return e_step_client(model, data, ensemble, unused, client, EKernel::likelihood);
}

std::size_t select_by_loss(const Model& model, const Dataset& data, const ClusterEnsemble& ensemble) {
    std::size_t best = ensemble.size();
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t k : ensemble.active_indices()) {
        double sum = 0.0;
        for (std::size_t j = 0; j < data.size(); ++j) sum += model.loss(data.x(j), data.y(j), ensemble.params[k]);
        const double mean = data.empty() ? 0.0 : sum / static_cast<double>(data.size());
        if (best == ensemble.size() || mean < best_loss) {
            best = k;
            best_loss = mean;
        }
    }
    if (best == ensemble.size()) throw ConfigError("no active cluster");
    return best;
}

namespace {

HardRound hard_round(const Model& model, const ClusterEnsemble& ensemble,
                     std::span<const Dataset> data, std::span<const std::size_t> selected,
                     const FedConfig& config, std::size_t round, double eta_g) {
    const std::size_t K = ensemble.size();
    HardRound out;
    out.choice.resize(selected.size());
    out.updates.resize(selected.size());
    parallel_for(selected.size(), config.workers, [&](std::size_t s) {
        const std::size_t i = selected[s];
        if (i >= data.size()) throw ConfigError("selected client out of range");
        const std::size_t k = select_by_loss(model, data[i], ensemble);
        ClientAssignment w;
        w.num_clusters = K;
        w.gamma.assign(data[i].size() * K, 0.0);
        for (std::size_t j = 0; j < data[i].size(); ++j) w.gamma[j * K + k] = 1.0;
        w.omega.assign(K, 0.0);
        w.omega[k] = 1.0;
        std::vector<std::uint8_t> mask(K, 0);
        mask[k] = 1;
        Rng rng = make_rng(config.seed, "local", round, i);
        ClientUpdate& u = out.updates[s];
        u.client = i;
        u.sample_count = data[i].size();
        u.local_params = local_train(model, data[i], w, ensemble, mask, LocalTrainOptions::from(config, i), rng);
        out.choice[s] = k;
    });
    out.ensemble = aggregate(model, ensemble, out.updates, eta_g);
    return out;
}

}  // namespace

HardRound ifca_round(const Model& model, const ClusterEnsemble& ensemble,
                     std::span<const Dataset> data, std::span<const std::size_t> selected,
                     const FedConfig& config, std::size_t round) {
    return hard_round(model, ensemble, data, selected, config, round, config.eta_global);
}

HardRound fesem_round(const Model& model, const ClusterEnsemble& ensemble,
                      std::span<const Dataset> data, std::span<const std::size_t> selected,
                      const FedConfig& config, std::size_t round) {
    return hard_round(model, ensemble, data, selected, config, round, 1.0);
}

int predict_hard(const Model& model, const ClusterEnsemble& ensemble, std::span<const double> x,
                 std::span<const double> omega) {
    if (omega.size() != ensemble.size()) throw ConfigError("omega size does not match ensemble");
    std::size_t best = ensemble.size();
    for (std::size_t k : ensemble.active_indices()) {
        if (best == ensemble.size() || omega[k] > omega[best]) best = k;
    }
    if (best == ensemble.size()) throw ConfigError("no active cluster");
    const auto p = model.class_probabilities(x, ensemble.params[best]);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace fedrc
