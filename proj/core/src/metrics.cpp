#include "fedrc/metrics.hpp"

#include <algorithm>

#include "fedrc/error.hpp"

namespace fedrc {

std::string to_string(Attribute a) {
    switch (a) {
        case Attribute::class_label: return "class";
        case Attribute::style: return "style";
        case Attribute::concept_id: return "concept";
    }
    return "?";
}

Attribute parse_attribute(const std::string& name) {
    for (auto a : {Attribute::class_label, Attribute::style, Attribute::concept_id}) {
        if (to_string(a) == name) return a;
    }
    throw ConfigError("unknown attribute '" + name + "' (class, style, concept)");
}

double CompositionTable::row_mass(std::size_t row) const {
    double s = 0.0;
    for (std::size_t k = 0; k < num_clusters; ++k) s += at(row, k);
    return s;
}

double CompositionTable::share(std::size_t row, std::size_t k) const {
    const double total = row_mass(row);
    return total > 0.0 ? at(row, k) / total : 0.0;
}

CompositionTable composition(const AssignmentState& state, const FederatedScenario& scenario,
                             Attribute attribute, CompositionMode mode) {
    const auto& clients = scenario.participating;
    if (state.clients.size() != clients.size()) throw ConfigError("assignment/scenario client count mismatch");
    const std::size_t K = state.num_clusters;

    CompositionTable t;
    t.attribute = attribute;
    t.mode = mode;
    t.num_clusters = K;
    std::size_t nvalues = 0;
    switch (attribute) {
        case Attribute::class_label: nvalues = scenario.num_classes; break;
        case Attribute::style: nvalues = scenario.num_styles + 1; break;
        case Attribute::concept_id: nvalues = scenario.num_concepts(); break;
    }
    t.values.resize(nvalues);
    for (std::size_t v = 0; v < nvalues; ++v) t.values[v] = static_cast<int>(v);
    t.mass.assign(nvalues * K, 0.0);

    for (std::size_t i = 0; i < clients.size(); ++i) {
        const auto& c = clients[i];
        const auto& a = state.clients[i];
        if (a.num_samples() != c.train.size()) throw ConfigError("assignment/scenario sample count mismatch");
        for (std::size_t j = 0; j < c.train.size(); ++j) {
            int v = 0;
            switch (attribute) {
                case Attribute::class_label: v = c.train_class[j]; break;
                case Attribute::style: v = c.style; break;
                case Attribute::concept_id: v = c.concept_id; break;
            }
            if (v < 0 || static_cast<std::size_t>(v) >= nvalues) throw ConfigError("annotation out of range");
            const auto row = a.row(j);
            double* dst = t.mass.data() + static_cast<std::size_t>(v) * K;
            if (mode == CompositionMode::soft) {
                for (std::size_t k = 0; k < K; ++k) dst[k] += row[k];
            } else {
                const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
                dst[best] += 1.0;
            }
        }
    }
    return t;
}

PurityScore purity_from_table(const CompositionTable& table, std::span<const std::uint8_t> active) {
    const std::size_t K = table.num_clusters;
    if (active.size() != K) throw ConfigError("active flags do not match the table");
    PurityScore p;
    p.per_cluster.assign(K, 0.0);
    double top_sum = 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        if (!active[k]) continue;
        double top = 0.0;
        double mass = 0.0;
        for (std::size_t v = 0; v < table.values.size(); ++v) {
            top = std::max(top, table.at(v, k));
            mass += table.at(v, k);
        }
        p.per_cluster[k] = mass > 0.0 ? top / mass : 0.0;
        top_sum += top;
        total += mass;
    }
    p.weighted = total > 0.0 ? top_sum / total : 0.0;
    return p;
}

PurityScore concept_purity(const AssignmentState& state, const FederatedScenario& scenario,
                           std::span<const std::uint8_t> active) {
    return purity_from_table(composition(state, scenario, Attribute::concept_id), active);
}

int predict_soft(const Model& model, const ClusterEnsemble& ensemble, std::span<const double> x,
                 std::span<const double> omega) {
    if (omega.size() != ensemble.size()) throw ConfigError("omega size does not match ensemble");
    std::vector<double> mix(model.num_classes(), 0.0);
    std::vector<double> p(model.num_classes());
    for (std::size_t k : ensemble.active_indices()) {
        if (omega[k] == 0.0) continue;
        model.class_probabilities(x, ensemble.params[k], p);
        for (std::size_t y = 0; y < p.size(); ++y) mix[y] += omega[k] * p[y];
    }
    return static_cast<int>(std::max_element(mix.begin(), mix.end()) - mix.begin());
}

double accuracy(const Model& model, const ClusterEnsemble& ensemble, const Dataset& data,
                std::span<const double> omega, PredictionMode mode) {
    if (data.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t j = 0; j < data.size(); ++j) {
        const int pred = mode == PredictionMode::soft ? predict_soft(model, ensemble, data.x(j), omega)
                                                      : predict_hard(model, ensemble, data.x(j), omega);
        if (pred == data.y(j)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace fedrc
