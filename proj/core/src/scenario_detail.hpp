#pragma once

#include <span>
#include <vector>

#include "fedrc/scenario.hpp"

namespace fedrc::detail {

std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights);

struct Style {
    std::vector<double> a;  // d x d row-major
    std::vector<double> b;
};

std::vector<Style> make_styles(const ScenarioConfig& config, std::size_t dim);
std::vector<double> apply_style(const Style& st, std::span<const double> x);
void assign_concepts(const ScenarioConfig& config, std::vector<int>& concept_of, std::vector<int>& style_of);
ClientDataset build_client(std::size_t id, int concept_id, int style, const ConceptMap& map,
                           const Style& st, const std::vector<std::vector<double>>& xs,
                           const std::vector<int>& classes, double test_fraction);
void add_nonparticipating(FederatedScenario& sc, const std::vector<std::vector<double>>& adapt_x,
                          const std::vector<int>& adapt_y, const std::vector<std::vector<double>>& test_x,
                          const std::vector<int>& test_y, std::size_t first_id);

// Shortest round-trip text for a double.
std::string format_double(double v);
double parse_double(std::string_view text, std::size_t line);

}  // namespace fedrc::detail
