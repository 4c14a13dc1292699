#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fedrc/data.hpp"
#include "fedrc/ensemble.hpp"
#include "fedrc/model.hpp"
#include "fedrc/rng.hpp"
#include "fedrc/scenario.hpp"

namespace testing {

inline fedrc::ModelSpec linear_spec(std::size_t d, std::size_t C) {
    fedrc::ModelSpec s;
    s.input_dim = d;
    s.num_classes = C;
    return s;
}

inline fedrc::ModelSpec mlp_spec(std::size_t d, std::vector<std::size_t> hidden, std::size_t C,
                                 bool shared = false) {
    fedrc::ModelSpec s;
    s.architecture = fedrc::Architecture::mlp;
    s.hidden = std::move(hidden);
    s.input_dim = d;
    s.num_classes = C;
    s.shared_trunk = shared;
    return s;
}

inline fedrc::Dataset random_dataset(std::size_t n, std::size_t d, std::size_t C, fedrc::Rng& rng,
                                     double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::uniform_int_distribution<int> lab(0, static_cast<int>(C) - 1);
    fedrc::Dataset ds(d);
    std::vector<double> x(d);
    for (std::size_t j = 0; j < n; ++j) {
        for (auto& v : x) v = g(rng);
        ds.add(x, lab(rng));
    }
    return ds;
}

inline fedrc::ParamVector random_params(std::size_t n, fedrc::Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    fedrc::ParamVector p(n);
    for (auto& v : p) v = g(rng);
    return p;
}

inline fedrc::ClusterEnsemble random_ensemble(const fedrc::Model& model, std::size_t K, fedrc::Rng& rng,
                                              double scale = 1.0) {
    fedrc::ClusterEnsemble e;
    e.spec = model.spec();
    e.active.assign(K, 1);
    for (std::size_t k = 0; k < K; ++k) e.params.push_back(random_params(model.num_params(), rng, scale));
    return e;
}

inline std::vector<double> as_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

// Small standard-style scenario for end-to-end tests.
inline fedrc::ScenarioConfig small_scenario(std::uint64_t seed, std::size_t clients = 12) {
    fedrc::ScenarioConfig c;
    c.num_clients = clients;
    c.min_samples = 40;
    c.max_samples = 60;
    c.input_dim = 6;
    c.num_classes = 4;
    c.holdout_adapt_per_class = 10;
    c.holdout_test_per_class = 10;
    c.seed = seed;
    c.finalize();
    return c;
}

}  // namespace testing
