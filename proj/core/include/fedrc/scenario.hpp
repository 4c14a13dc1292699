#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedrc/data.hpp"

namespace fedrc {

// A label permutation: observed label = map[class].
using ConceptMap = std::vector<int>;

ConceptMap identity_concept(std::size_t num_classes);
ConceptMap reverse_concept(std::size_t num_classes);  // y -> C - 1 - y
ConceptMap shift_concept(std::size_t num_classes);    // y -> (y + 1) mod C
// "identity", "reverse" or "shift".
ConceptMap named_concept(const std::string& name, std::size_t num_classes);
bool is_permutation(const ConceptMap& map, std::size_t num_classes);
ConceptMap invert(const ConceptMap& map);

struct ScenarioConfig {
    std::size_t num_clients = 60;
    std::size_t min_samples = 100;  // per participating client, train + test
    std::size_t max_samples = 200;
    double test_fraction = 0.2;
    std::size_t input_dim = 10;
    std::size_t num_classes = 10;
    double dirichlet_alpha = 1.0;
    double class_separation = 3.0;  // std of the blob centers
    double noise_std = 1.0;         // within-blob std
    std::size_t num_feature_styles = 5;
    double feature_style_strength = 0.5;
    std::vector<ConceptMap> concept_maps;      // empty: identity, reverse, shift
    std::vector<double> concept_proportions;   // empty: equal
    std::vector<double> feature_shift_fraction{0.3};  // per concept, or one value for all
    std::size_t holdout_adapt_per_class = 20;  // nonparticipating adaptation split
    std::size_t holdout_test_per_class = 50;   // nonparticipating test split
    std::uint64_t seed = 0;

    // Fills defaults for empty concept lists and checks feasibility.
    void finalize();
    void validate() const;
};

// Concepts 0/1/2 with proportions 50/25/25 and 40/20/20 percent of each
// concept's clients carrying a feature style: 30% untouched, 20% style only,
// 25% reversed labels (a fifth of them styled), 25% shifted labels (a fifth
// of them styled).
void apply_preset(ScenarioConfig& config, const std::string& name);

struct ClientDataset {
    std::size_t id = 0;
    int concept_id = 0;
    int style = 0;  // 0 = no feature style
    Dataset train;
    Dataset test;
    std::vector<int> train_class;  // latent class before the concept relabeling
    std::vector<int> test_class;

    friend bool operator==(const ClientDataset&, const ClientDataset&) = default;
};

struct FederatedScenario {
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    std::size_t num_styles = 0;
    std::vector<ConceptMap> concept_maps;
    std::vector<double> concept_proportions;
    std::vector<double> feature_shift_fraction;
    std::vector<ClientDataset> participating;
    std::vector<ClientDataset> nonparticipating;  // one balanced, style-free client per concept

    std::vector<Dataset> train_sets() const;
    std::size_t num_concepts() const noexcept { return concept_maps.size(); }

    friend bool operator==(const FederatedScenario&, const FederatedScenario&) = default;
};

// Gaussian blobs (one center per class), Dirichlet label skew per client,
// affine feature styles x -> A_s x + b_s, concept relabeling by permutation.
FederatedScenario generate(const ScenarioConfig& config);

// Delimited numeric table with a label column; the rows are split into a
// balanced holdout and a Dirichlet (per-class over clients) partition, then
// the same concept and style machinery as generate() is applied.
struct TabularSchema {
    char delimiter = ',';
    bool has_header = true;
    std::string label_column = "label";  // name (with header) or 0-based index
};

FederatedScenario load_tabular(const std::filesystem::path& path, const TabularSchema& schema,
                               const ScenarioConfig& config);

// Plain table (features..., label) of every participating sample's latent
// class, suitable as input to load_tabular.
void write_tabular(const FederatedScenario& scenario, const std::filesystem::path& path);

// scenario.json (header) + samples.csv. Each sample row is
//   x_0,...,x_{d-1},label,client,concept,style
// with clients in header order and each client's train rows before its test
// rows. Doubles use the shortest round-trip representation.
void write_scenario(const FederatedScenario& scenario, const std::filesystem::path& dir);
FederatedScenario read_scenario(const std::filesystem::path& dir);

}  // namespace fedrc
