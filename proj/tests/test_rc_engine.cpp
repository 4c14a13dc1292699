#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedrc/centralized.hpp"
#include "fedrc/error.hpp"
#include "fedrc/rc_engine.hpp"
#include "fedrc/scenario.hpp"
#include "oracle/brute_force.hpp"
#include "support.hpp"

using namespace fedrc;

namespace {

// Linear parameters whose bias on `label` is so large that f(x, label) is 0
// to double precision.
ParamVector sure_of(const Model& m, int label) {
    ParamVector p(m.num_params(), 0.0);
    p[m.spec().input_dim * m.spec().num_classes + std::size_t(label)] = 2000.0;
    return p;
}

std::vector<std::uint8_t> all_active(std::size_t K) { return std::vector<std::uint8_t>(K, 1); }

void check_simplex(const AssignmentState& s) {
    for (const auto& c : s.clients) {
        for (std::size_t j = 0; j < c.num_samples(); ++j) {
            const auto r = c.row(j);
            double sum = 0.0;
            for (double g : r) {
                CHECK(g >= 0.0);
                sum += g;
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
        // omega is the sample-order mean of gamma, bit for bit.
        std::vector<double> mean(c.num_clusters, 0.0);
        for (std::size_t j = 0; j < c.num_samples(); ++j)
            for (std::size_t k = 0; k < c.num_clusters; ++k) mean[k] += c.row(j)[k];
        for (auto& m : mean) m /= double(c.num_samples());
        CHECK(mean == c.omega);
    }
}

AssignmentState random_state(std::span<const Dataset> data, std::size_t K, Rng& rng) {
    std::gamma_distribution<double> g(1.0, 1.0);
    AssignmentState s;
    s.num_clusters = K;
    for (const auto& d : data) {
        ClientAssignment c;
        c.num_clusters = K;
        c.gamma.resize(d.size() * K);
        for (std::size_t j = 0; j < d.size(); ++j) {
            double z = 0.0;
            for (std::size_t k = 0; k < K; ++k) z += c.gamma[j * K + k] = g(rng) + 1e-3;
            for (std::size_t k = 0; k < K; ++k) c.gamma[j * K + k] /= z;
        }
        c.omega.resize(K);
        recompute_omega(c);
        s.clients.push_back(std::move(c));
    }
    return s;
}

// Same instance in the oracle's nested-vector form.
oracle::Instance to_oracle(const Model& m, const ClusterEnsemble& ens, std::span<const Dataset> data,
                           const AssignmentState& s) {
    oracle::Instance in;
    in.K = ens.size();
    in.C = m.spec().num_classes;
    for (std::size_t i = 0; i < data.size(); ++i) {
        in.labels.emplace_back();
        in.f.emplace_back();
        in.gamma.emplace_back();
        for (std::size_t j = 0; j < data[i].size(); ++j) {
            in.labels[i].push_back(data[i].y(j));
            oracle::Vec f, g;
            const auto x = testing::as_vec(data[i].x(j));
            for (std::size_t k = 0; k < in.K; ++k) {
                f.push_back(oracle::linear_loss(ens.params[k], m.spec().input_dim, in.C, x, data[i].y(j)));
                g.push_back(s.clients[i].row(j)[k]);
            }
            in.f[i].push_back(f);
            in.gamma[i].push_back(g);
        }
        in.omega.push_back(s.clients[i].omega);
    }
    return in;
}

}  // namespace

TEST_CASE("i_tilde hand examples") {
    Model m(testing::linear_spec(2, 2));
    Dataset ds(2);
    for (int y : {0, 0, 0, 1}) ds.add(std::vector<double>{0.0, 0.0}, y);
    std::vector<Dataset> data{ds};
    AssignmentState s = AssignmentState::uniform(data, all_active(1));
    const auto stats = label_stats(s, data, all_active(1), 2, 0.0, 0);
    const std::vector<double> x{0.0, 0.0};
    CHECK(i_tilde(m, x, 1, sure_of(m, 1), 0, stats) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(i_tilde(m, x, 0, sure_of(m, 0), 0, stats) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    // Zero parameters: f = ln 2 halves both.
    ParamVector zero(m.num_params(), 0.0);
    CHECK(i_tilde(m, x, 1, zero, 0, stats) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("i_tilde equals the number of classes under symmetry") {
    const std::size_t C = 5, K = 3;
    Model m(testing::linear_spec(2, C));
    Dataset ds(2);
    for (int r = 0; r < 3; ++r)
        for (int y = 0; y < int(C); ++y) ds.add(std::vector<double>{1.0, -1.0}, y);
    std::vector<Dataset> data{ds};
    const auto s = AssignmentState::uniform(data, all_active(K));
    const auto stats = label_stats(s, data, all_active(K), C, 0.0, 0);
    for (std::size_t j = 0; j < ds.size(); ++j)
        for (std::size_t k = 0; k < K; ++k)
            CHECK(i_tilde(m, ds.x(j), ds.y(j), sure_of(m, ds.y(j)), k, stats) == doctest::Approx(double(C)).epsilon(1e-14));
}

TEST_CASE("zero label mass is floored and flagged") {
    Model m(testing::linear_spec(1, 3));
    Dataset ds(1);
    ds.add(std::vector<double>{0.0}, 0);
    std::vector<Dataset> data{ds};
    const auto s = AssignmentState::uniform(data, all_active(1));
    const auto stats = label_stats(s, data, all_active(1), 3, 0.0, 0);
    CHECK(stats.mass(0, 2) == 1e-12);
    Diagnostics diag;
    const double v = i_tilde(m, std::vector<double>{0.0}, 2, sure_of(m, 2), 0, stats, &diag);
    CHECK(std::isfinite(v));
    CHECK(v > 0.0);
    CHECK(diag.floored_pairs == 1);
}

TEST_CASE("responsibilities hand examples") {
    const auto act = all_active(2);
    std::vector<double> g(2);
    responsibilities(std::vector<double>{std::log(2.0), std::log(2.0)}, std::vector<double>{0.5, 0.5}, act, g);
    CHECK(g[0] == doctest::Approx(0.5));
    CHECK(g[1] == doctest::Approx(0.5));
    responsibilities(std::vector<double>{std::log(3.0), 0.0}, std::vector<double>{0.5, 0.5}, act, g);
    CHECK(g[0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(g[1] == doctest::Approx(0.25).epsilon(1e-15));
    responsibilities(std::vector<double>{-3.0, 5.0}, std::vector<double>{1.0, 0.0}, act, g);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 0.0);
}

TEST_CASE("vanishing denominators fall back to uniform") {
    const std::vector<std::uint8_t> act{1, 0, 1};
    std::vector<double> g(3);
    const double ninf = -std::numeric_limits<double>::infinity();
    auto d = responsibilities(std::vector<double>{ninf, ninf, ninf}, std::vector<double>{0.5, 0.0, 0.5}, act, g);
    CHECK(d.uniform_fallbacks == 1);
    CHECK(g == std::vector<double>{0.5, 0.0, 0.5});
    d = responsibilities(std::vector<double>{0.0, 0.0, 0.0}, std::vector<double>{0.0, 1.0, 0.0}, act, g);
    CHECK(d.uniform_fallbacks == 1);
    CHECK(g == std::vector<double>{0.5, 0.0, 0.5});
    // Tiny but representable kernels do not trigger the fallback.
    d = responsibilities(std::vector<double>{-900.0, 0.0, -901.0}, std::vector<double>{0.5, 0.0, 0.5}, act, g);
    CHECK(d.uniform_fallbacks == 0);
    CHECK(g[0] / g[2] == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("adam first step overshoots to a vertex") {
    ClientAssignment c;
    c.num_clusters = 2;
    c.gamma = {0.5, 0.5};
    c.omega = {0.5, 0.5};
    RCHyper h;
    h.adam_enabled = true;
    adam_update(c, std::vector<double>{0.6, 0.4}, all_active(2), h);
    CHECK(c.gamma[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.gamma[1] == 0.0);
    CHECK(c.omega == c.gamma);
}

TEST_CASE("adam leaves a fixed point unchanged and decays moments") {
    ClientAssignment c;
    c.num_clusters = 3;
    c.gamma = {0.2, 0.3, 0.5};
    c.omega = c.gamma;
    c.adam_nu = {0.1, -0.1, 0.0};
    c.adam_a = {0.04, 0.04, 0.0};
    RCHyper h;
    h.adam_enabled = true;
    h.adam_alpha = 1e-9;  // keeps the decaying momentum from moving gamma noticeably
    const auto before = c.gamma;
    adam_update(c, before, all_active(3), h);
    CHECK(c.adam_nu[0] == doctest::Approx(0.09));
    CHECK(c.adam_a[0] == doctest::Approx(0.0396));
    for (std::size_t k = 0; k < 3; ++k) CHECK(c.gamma[k] == doctest::Approx(before[k]).epsilon(1e-8));

    ClientAssignment fresh;
    fresh.num_clusters = 3;
    fresh.gamma = before;
    fresh.omega = before;
    h.adam_alpha = 1.0;
    adam_update(fresh, before, all_active(3), h);
    CHECK(fresh.gamma == before);
}

TEST_CASE("zero betas give a sign step") {
    ClientAssignment c;
    c.num_clusters = 3;
    c.gamma = {0.5, 0.3, 0.2};
    c.omega = c.gamma;
    RCHyper h;
    h.adam_enabled = true;
    h.adam_beta1 = 0.0;
    h.adam_beta2 = 0.0;
    h.adam_eps = 0.0;
    h.adam_alpha = 0.01;
    adam_update(c, std::vector<double>{0.4, 0.35, 0.25}, all_active(3), h);
    const std::vector<double> raw{0.49, 0.31, 0.21};
    const double z = 0.49 + 0.31 + 0.21;
    for (std::size_t k = 0; k < 3; ++k) CHECK(c.gamma[k] == doctest::Approx(raw[k] / z).epsilon(1e-14));
}

TEST_CASE("label statistics without noise") {
    Rng rng(4);
    const std::size_t K = 3, C = 4;
    std::vector<Dataset> data{testing::random_dataset(13, 2, C, rng), testing::random_dataset(9, 2, C, rng)};
    const auto s = random_state(data, K, rng);
    const auto stats = label_stats(s, data, all_active(K), C, 0.0, 0);
    for (std::size_t k = 0; k < K; ++k) {
        double sum = 0.0;
        for (int y = 0; y < int(C); ++y) sum += stats.mass(k, y);
        CHECK(std::abs(sum - stats.total_mass[k]) < 1e-9);
    }
    std::vector<std::uint8_t> removed{1, 0, 1};
    const auto partial = label_stats(s, data, removed, C, 0.0, 0);
    CHECK(partial.total_mass[1] == 0.0);

    std::vector<Dataset> one{data[0]};
    const auto u = AssignmentState::uniform(one, all_active(K));
    const auto us = label_stats(u, one, all_active(K), C, 0.0, 0);
    for (int y = 0; y < int(C); ++y) {
        const auto count = std::count(one[0].labels().begin(), one[0].labels().end(), y);
        for (std::size_t k = 0; k < K; ++k)
            CHECK(us.mass(k, y) == doctest::Approx(std::max(double(count) / K, 1e-12)).epsilon(1e-14));
    }
}

TEST_CASE("noised label statistics are unbiased") {
    Rng rng(12);
    const std::size_t K = 2, C = 3;
    std::vector<Dataset> data;
    for (int i = 0; i < 20; ++i) data.push_back(testing::random_dataset(30, 2, C, rng));
    const auto s = random_state(data, K, rng);
    const auto exact = label_stats(s, data, all_active(K), C, 0.0, 0);
    const int trials = 1000;
    std::vector<double> sum(K * C, 0.0), sq(K * C, 0.0);
    for (int t = 0; t < trials; ++t) {
        const auto noisy = label_stats(s, data, all_active(K), C, 1.0, std::uint64_t(t));
        CHECK(noisy.total_mass == exact.total_mass);
        for (std::size_t e = 0; e < K * C; ++e) {
            sum[e] += noisy.label_mass[e];
            sq[e] += noisy.label_mass[e] * noisy.label_mass[e];
        }
    }
    for (std::size_t e = 0; e < K * C; ++e) {
        const double mean = sum[e] / trials;
        const double sd = std::sqrt(sq[e] / trials - mean * mean);
        CHECK(sd == doctest::Approx(std::sqrt(20.0)).epsilon(0.1));
        CHECK(std::abs(mean - exact.label_mass[e]) < 3.0 * sd / std::sqrt(double(trials)));
    }
}

TEST_CASE("noise never drives a stored mass below the floor") {
    Rng rng(2);
    std::vector<Dataset> data{testing::random_dataset(4, 2, 3, rng)};
    const auto s = AssignmentState::uniform(data, all_active(2));
    for (std::uint64_t t = 0; t < 50; ++t) {
        const auto st = label_stats(s, data, all_active(2), 3, 50.0, t);
        for (double v : st.label_mass) CHECK(v >= 1e-12);
    }
}

TEST_CASE("objective on a single cluster is the mean log i_tilde") {
    Rng rng(6);
    Model m(testing::linear_spec(3, 3));
    std::vector<Dataset> data{testing::random_dataset(7, 3, 3, rng), testing::random_dataset(5, 3, 3, rng)};
    auto ens = testing::random_ensemble(m, 1, rng);
    const auto s = AssignmentState::uniform(data, all_active(1));
    const auto stats = label_stats(s, data, all_active(1), 3, 0.0, 0);
    double sum = 0.0;
    for (const auto& d : data)
        for (std::size_t j = 0; j < d.size(); ++j) sum += std::log(i_tilde(m, d.x(j), d.y(j), ens.params[0], 0, stats));
    CHECK(objective(m, s, ens, stats, data) == doctest::Approx(sum / 12.0).epsilon(1e-13));
}

TEST_CASE("objective equals ln C in the symmetric case") {
    const std::size_t C = 6;
    Model m(testing::linear_spec(C, C));
    Dataset ds(C);
    for (int r = 0; r < 2; ++r)
        for (std::size_t y = 0; y < C; ++y) {
            std::vector<double> x(C, 0.0);
            x[y] = 1.0;
            ds.add(x, int(y));
        }
    ParamVector p(m.num_params(), 0.0);
    for (std::size_t c = 0; c < C; ++c) p[c * C + c] = 2000.0;
    ClusterEnsemble ens;
    ens.spec = m.spec();
    ens.params = {p, p};
    ens.active = all_active(2);
    std::vector<Dataset> data{ds};
    const auto s = AssignmentState::uniform(data, all_active(2));
    const auto stats = label_stats(s, data, all_active(2), C, 0.0, 0);
    CHECK(objective(m, s, ens, stats, data) == doctest::Approx(std::log(double(C))).epsilon(1e-14));
}

TEST_CASE("objective and e_step match the brute-force oracle") {
    Rng rng(2024);
    std::uniform_int_distribution<int> pick_k(1, 3), pick_n(1, 6), pick_c(2, 4), pick_m(1, 3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t K = std::size_t(pick_k(rng)), C = std::size_t(pick_c(rng)), d = 3;
        const int clients = pick_m(rng);
        std::vector<Dataset> data;
        for (int i = 0; i < clients; ++i) data.push_back(testing::random_dataset(std::size_t(pick_n(rng)), d, C, rng, 1.5));
        Model m(testing::linear_spec(d, C));
        const auto ens = testing::random_ensemble(m, K, rng);
        auto s = random_state(data, K, rng);
        const auto stats = label_stats(s, data, all_active(K), C, 0.0, 0);
        const auto in = to_oracle(m, ens, data, s);

        CHECK(std::abs(objective(m, s, ens, stats, data) - oracle::objective(in)) < 1e-10);

        std::vector<std::vector<oracle::Vec>> og;
        std::vector<oracle::Vec> oo;
        oracle::e_step(in, og, oo);
        e_step(m, data, ens, stats, s);
        for (std::size_t i = 0; i < data.size(); ++i) {
            for (std::size_t j = 0; j < data[i].size(); ++j)
                for (std::size_t k = 0; k < K; ++k) CHECK(std::abs(s.clients[i].row(j)[k] - og[i][j][k]) < 1e-10);
            for (std::size_t k = 0; k < K; ++k) CHECK(std::abs(s.clients[i].omega[k] - oo[i][k]) < 1e-10);
        }
    }
}

TEST_CASE("e_step and e_step_adam preserve the simplex") {
    Rng rng(31);
    Model m(testing::mlp_spec(3, {4}, 4));
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Dataset> data;
        for (int i = 0; i < 4; ++i) data.push_back(testing::random_dataset(10 + std::size_t(i), 3, 4, rng, 2.0));
        auto ens = testing::random_ensemble(m, 3, rng, 2.0);
        if (trial % 3 == 0) ens.active[1] = 0;
        AssignmentState s = AssignmentState::uniform(data, ens.active);
        RCHyper h;
        h.adam_enabled = true;
        for (int round = 0; round < 5; ++round) {
            const auto stats = label_stats(s, data, ens.active, 4, trial % 2 ? 0.5 : 0.0, std::uint64_t(round));
            if (trial % 2) e_step_adam(m, data, ens, stats, s, h, 2);
            else e_step(m, data, ens, stats, s, 2);
            check_simplex(s);
            if (!ens.active[1])
                for (const auto& c : s.clients) CHECK(c.omega[1] == 0.0);
        }
    }
}

TEST_CASE("m_step leaves a cluster with zero weight untouched") {
    Rng rng(17);
    Model m(testing::linear_spec(3, 3));
    std::vector<Dataset> data{testing::random_dataset(8, 3, 3, rng)};
    const auto ens = testing::random_ensemble(m, 2, rng);
    auto s = AssignmentState::uniform(data, all_active(2));
    for (auto& c : s.clients) {
        for (std::size_t j = 0; j < c.num_samples(); ++j) {
            c.row(j)[0] = 1.0;
            c.row(j)[1] = 0.0;
        }
        recompute_omega(c);
    }
    const auto next = m_step_centralized(m, s, ens, data, 0.3);
    CHECK(next.params[1] == ens.params[1]);
    CHECK(next.params[0] != ens.params[0]);
}

TEST_CASE("m_step with one cluster is full-batch gradient descent") {
    Rng rng(18);
    Model m(testing::mlp_spec(3, {4}, 3));
    std::vector<Dataset> data{testing::random_dataset(8, 3, 3, rng), testing::random_dataset(5, 3, 3, rng)};
    const auto ens = testing::random_ensemble(m, 1, rng);
    const auto s = AssignmentState::uniform(data, all_active(1));
    const auto next = m_step_centralized(m, s, ens, data, 0.2);

    ParamVector grad(m.num_params(), 0.0);
    for (const auto& d : data)
        for (std::size_t j = 0; j < d.size(); ++j) {
            const auto g = m.loss_gradient(d.x(j), d.y(j), ens.params[0]);
            for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += g[p];
        }
    for (std::size_t p = 0; p < grad.size(); ++p)
        CHECK(next.params[0][p] == doctest::Approx(ens.params[0][p] - 0.2 * grad[p] / 13.0).epsilon(1e-12));
}

TEST_CASE("step size formula") {
    CHECK(theorem_step_size(1.0, 0.0) == doctest::Approx(0.2));
    CHECK(theorem_step_size(2.0, 8.0) == doctest::Approx(8.0 / 152.0));
}

TEST_CASE("objective ascends under the theorem step size") {
    ScenarioConfig sc;
    sc.num_clients = 12;
    sc.min_samples = 100;
    sc.max_samples = 150;
    sc.seed = 7;
    sc.finalize();
    const auto scen = generate(sc);
    Model m(testing::linear_spec(scen.input_dim, scen.num_classes));
    const auto data = scen.train_sets();
    const auto ens = ClusterEnsemble::initialize(m, 3, 7);
    const auto est = estimate_step_size(m, ens, data, 7);
    REQUIRE(est.eta > 0.0);
    CentralizedSolver solver(m, data, ens, RCHyper{});
    double prev = solver.current_objective();
    const double start = prev;
    for (int t = 0; t < 200; ++t) {
        const auto step = solver.iterate(est.eta);
        CHECK(step.objective_after >= step.objective_before - 1e-6);
        const double cur = solver.current_objective();
        CHECK(cur >= prev - 1e-6);
        prev = cur;
    }
    CHECK(prev > start);
}

TEST_CASE("a conflicting label lowers the log term") {
    const std::size_t C = 3, d = 3;
    Model m(testing::linear_spec(d, C));
    // Cluster 0 fits the identity concept, cluster 1 the shifted one.
    ParamVector p0(m.num_params(), 0.0), p1(m.num_params(), 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        p0[c * d + c] = 5.0;
        p1[((c + 1) % C) * d + c] = 5.0;
    }
    ClusterEnsemble ens;
    ens.spec = m.spec();
    ens.params = {p0, p1};
    ens.active = all_active(2);
    Dataset pool(d);
    for (std::size_t c = 0; c < C; ++c)
        for (int r = 0; r < 4; ++r) {
            std::vector<double> x(d, 0.0);
            x[c] = 1.0;
            pool.add(x, int(c));
        }
    std::vector<Dataset> data{pool};
    const auto stats = label_stats(AssignmentState::uniform(data, all_active(2)), data, all_active(2), C, 0.0, 0);
    const std::vector<double> omega{0.9, 0.1};
    auto log_term = [&](std::span<const double> x, int y) {
        double s = 0.0;
        for (std::size_t k = 0; k < 2; ++k) s += omega[k] * i_tilde(m, x, y, ens.params[k], k, stats);
        return std::log(s);
    };
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> x(d, 0.0);
        x[c] = 1.0;
        const double own = log_term(x, int(c));
        const double swapped = log_term(x, int((c + 1) % C));
        CHECK(swapped < own);
    }
}

TEST_CASE("hyperparameter validation") {
    RCHyper h;
    h.adam_beta1 = 1.0;
    CHECK_THROWS_AS(h.validate(), ConfigError);
    h = RCHyper{};
    h.eta = 0.0;
    CHECK_THROWS_AS(h.validate(), ConfigError);
    h = RCHyper{};
    h.eps_floor = 0.0;
    CHECK_THROWS_AS(h.validate(), ConfigError);
}

TEST_CASE("non-finite parameters raise a numeric error") {
    Rng rng(1);
    Model m(testing::linear_spec(2, 2));
    std::vector<Dataset> data{testing::random_dataset(3, 2, 2, rng)};
    auto ens = testing::random_ensemble(m, 1, rng);
    ens.params[0][0] = std::numeric_limits<double>::infinity();
    const auto s = AssignmentState::uniform(data, all_active(1));
    const auto stats = label_stats(s, data, all_active(1), 2, 0.0, 0);
    CHECK_THROWS_AS(objective(m, s, ens, stats, data), NumericError);
}
