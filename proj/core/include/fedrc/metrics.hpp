#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fedrc/baselines.hpp"
#include "fedrc/ensemble.hpp"
#include "fedrc/model.hpp"
#include "fedrc/rc_engine.hpp"
#include "fedrc/scenario.hpp"

namespace fedrc {

enum class Attribute { class_label, style, concept_id };
std::string to_string(Attribute a);
Attribute parse_attribute(const std::string& name);  // "class", "style", "concept"

enum class CompositionMode { soft, hard };

// mass(v, k): gamma mass of the participating training samples whose
// annotation equals values[v] and that sit in cluster k. Hard mode counts
// each sample once, in its argmax cluster.
struct CompositionTable {
    Attribute attribute = Attribute::concept_id;
    CompositionMode mode = CompositionMode::soft;
    std::vector<int> values;
    std::size_t num_clusters = 0;
    std::vector<double> mass;  // values x clusters

    double at(std::size_t row, std::size_t k) const { return mass[row * num_clusters + k]; }
    double row_mass(std::size_t row) const;
    // Share of value `row` that sits in cluster k; the shares of a row sum to 1.
    double share(std::size_t row, std::size_t k) const;
};

CompositionTable composition(const AssignmentState& state, const FederatedScenario& scenario,
                             Attribute attribute, CompositionMode mode = CompositionMode::soft);

struct PurityScore {
    std::vector<double> per_cluster;  // max concept mass / cluster mass
    double weighted = 0.0;            // mass-weighted mean over active clusters
};

PurityScore concept_purity(const AssignmentState& state, const FederatedScenario& scenario,
                           std::span<const std::uint8_t> active);
PurityScore purity_from_table(const CompositionTable& concept_table, std::span<const std::uint8_t> active);

enum class PredictionMode { soft, hard };

// argmax_y sum_k omega_k softmax(m(x, theta_k))_y
int predict_soft(const Model& model, const ClusterEnsemble& ensemble, std::span<const double> x,
                 std::span<const double> omega);

double accuracy(const Model& model, const ClusterEnsemble& ensemble, const Dataset& data,
                std::span<const double> omega, PredictionMode mode);

struct RoundReport {
    std::size_t round = 0;
    double objective = 0.0;
    double train_acc = 0.0;        // participating clients, train splits
    double local_acc = 0.0;        // participating clients, test splits
    double global_acc = 0.0;       // nonparticipating clients, soft prediction
    double global_acc_hard = 0.0;  // nonparticipating clients, argmax-omega cluster
    std::size_t active_clusters = 0;
    double gamma_change = 0.0;
    double concept_purity = 0.0;
    std::size_t uniform_fallbacks = 0;
    std::vector<double> cluster_mass;  // mass fraction per cluster index
    std::vector<std::size_t> removed;  // clusters removed at the start of this round

    friend bool operator==(const RoundReport&, const RoundReport&) = default;
};

// Column order of rounds.csv.
std::string rounds_csv_header(std::size_t clusters);
void write_rounds_csv(std::ostream& out, std::span<const RoundReport> reports, std::size_t clusters);

// Index of the report with the best train accuracy (earliest on ties).
std::size_t best_train_round(std::span<const RoundReport> reports);

void write_composition_csv(std::ostream& out, const CompositionTable& table);

struct RunSummary {
    std::string algorithm;
    std::size_t clusters = 0;
    std::uint64_t seed = 0;
    std::vector<RoundReport> rounds;
    std::vector<CompositionTable> composition;
    PurityScore purity;
    std::optional<std::size_t> gamma_converged_round;
    std::vector<std::size_t> removed_clusters;
};

void write_summary_json(std::ostream& out, const RunSummary& summary);

}  // namespace fedrc
