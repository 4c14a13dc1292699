#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fedrc/error.hpp"
#include "fedrc/model.hpp"
#include "oracle/brute_force.hpp"
#include "support.hpp"

using namespace fedrc;

namespace {

// Largest relative gap between analytic and central-difference gradients.
// Coordinates whose gradient is below 1e-6 in both are compared against that
// floor, where the difference quotient itself is only accurate to ~1e-10.
double gradient_check(const Model& m, std::span<const double> x, int y, ParamVector p) {
    const auto g = m.loss_gradient(x, y, p);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + h;
        const double up = m.loss(x, y, p);
        p[i] = keep - h;
        const double down = m.loss(x, y, p);
        p[i] = keep;
        const double fd = (up - down) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - g[i]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("zero parameters give the uniform softmax") {
    for (std::size_t C : {2u, 4u}) {
        Model m(testing::linear_spec(3, C));
        ParamVector zero(m.num_params(), 0.0);
        const std::vector<double> x{0.3, -1.0, 2.5};
        CHECK(m.loss(x, 1, zero) == doctest::Approx(std::log(double(C))).epsilon(1e-15));
        for (double p : m.class_probabilities(x, zero)) CHECK(p == doctest::Approx(1.0 / C));
    }
}

TEST_CASE("bias gradient at zero parameters is softmax minus one-hot") {
    const std::size_t C = 4, d = 3;
    Model m(testing::linear_spec(d, C));
    ParamVector zero(m.num_params(), 0.0);
    const std::vector<double> x{1.0, 2.0, 3.0};
    const auto g = m.loss_gradient(x, 2, zero);
    for (std::size_t c = 0; c < C; ++c) {
        const double want = c == 2 ? -1.0 + 1.0 / C : 1.0 / C;
        CHECK(g[C * d + c] == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("loss matches the straight-line recomputation") {
    Rng rng(11);
    Model lin(testing::linear_spec(5, 3));
    Model mlp(testing::mlp_spec(5, {4}, 3));
    for (int t = 0; t < 50; ++t) {
        const auto ds = testing::random_dataset(1, 5, 3, rng, 2.0);
        const auto x = testing::as_vec(ds.x(0));
        const auto pl = testing::random_params(lin.num_params(), rng);
        const auto pm = testing::random_params(mlp.num_params(), rng);
        CHECK(lin.loss(x, ds.y(0), pl) == doctest::Approx(oracle::linear_loss(pl, 5, 3, x, ds.y(0))).epsilon(1e-12));
        CHECK(mlp.loss(x, ds.y(0), pm) == doctest::Approx(oracle::mlp1_loss(pm, 5, 4, 3, x, ds.y(0))).epsilon(1e-12));
    }
}

TEST_CASE("probabilities sum to one and agree with the loss") {
    Rng rng(3);
    Model m(testing::mlp_spec(4, {6, 5}, 7));
    for (int t = 0; t < 100; ++t) {
        const auto ds = testing::random_dataset(1, 4, 7, rng, 3.0);
        const auto p = testing::random_params(m.num_params(), rng, 2.0);
        const auto probs = m.class_probabilities(ds.x(0), p);
        double s = 0.0;
        for (double v : probs) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
        for (int y = 0; y < 7; ++y) {
            CHECK(std::abs(m.loss(ds.x(0), y, p) + std::log(probs[std::size_t(y)])) < 1e-10);
        }
        // exp(-loss) over all labels, renormalized, is the same vector.
        std::vector<double> e(7);
        double z = 0.0;
        for (int y = 0; y < 7; ++y) z += e[std::size_t(y)] = std::exp(-m.loss(ds.x(0), y, p));
        for (int y = 0; y < 7; ++y) CHECK(e[std::size_t(y)] / z == doctest::Approx(probs[std::size_t(y)]).epsilon(1e-12));
    }
}

TEST_CASE("large logits do not overflow") {
    Model m(testing::linear_spec(2, 3));
    ParamVector p(m.num_params(), 0.0);
    p[0] = 800.0;  // class 0 weight on x0
    const std::vector<double> x{1.0, 0.0};
    CHECK(m.loss(x, 0, p) == doctest::Approx(0.0));
    CHECK(m.loss(x, 1, p) == doctest::Approx(800.0));
    const auto g = m.loss_gradient(x, 1, p);
    CHECK(all_finite(g));
}

TEST_CASE("analytic gradients match central differences") {
    Rng rng(5);
    const std::vector<ModelSpec> specs = {testing::linear_spec(6, 4), testing::mlp_spec(6, {5}, 4),
                                          testing::mlp_spec(6, {5, 3}, 4, true)};
    for (const auto& spec : specs) {
        Model m(spec);
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            const auto ds = testing::random_dataset(1, 6, 4, rng);
            worst = std::max(worst, gradient_check(m, ds.x(0), ds.y(0), testing::random_params(m.num_params(), rng)));
        }
        CAPTURE(to_string(spec.architecture));
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("shared trunk gradient is the sum over clusters") {
    Rng rng(8);
    Model m(testing::mlp_spec(4, {3}, 3, true));
    const std::size_t K = 3;
    const double w[K] = {0.2, 0.5, 0.3};
    auto ens = testing::random_ensemble(m, K, rng);
    for (std::size_t k = 1; k < K; ++k) {
        std::copy_n(ens.params[0].begin(), m.trunk_size(), ens.params[k].begin());
    }
    const auto ds = testing::random_dataset(1, 4, 3, rng);

    std::vector<ParamVector> grads(K, ParamVector(m.num_params(), 0.0));
    std::vector<ParamVector*> ptrs;
    for (std::size_t k = 0; k < K; ++k) {
        m.accumulate_gradient(ds.x(0), ds.y(0), ens.params[k], w[k], grads[k]);
        ptrs.push_back(&grads[k]);
    }
    tie_trunk_gradients(m, ptrs);

    auto total = [&](const std::vector<ParamVector>& ps) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += w[k] * m.loss(ds.x(0), ds.y(0), ps[k]);
        return s;
    };
    const double h = 1e-5;
    for (std::size_t p = 0; p < m.trunk_size(); ++p) {
        auto up = ens.params, down = ens.params;
        for (std::size_t k = 0; k < K; ++k) {
            up[k][p] += h;
            down[k][p] -= h;
        }
        const double fd = (total(up) - total(down)) / (2 * h);
        CHECK(std::abs(fd - grads[0][p]) / std::max({std::abs(fd), 1e-6}) < 1e-4);
        for (std::size_t k = 1; k < K; ++k) CHECK(grads[k][p] == grads[0][p]);
    }
}

TEST_CASE("trunk stays bit-identical after tied head updates") {
    Rng rng(9);
    Model m(testing::mlp_spec(3, {4}, 2, true));
    auto ens = ClusterEnsemble::initialize(m, 3, 42);
    REQUIRE(ens.trunk_shared(m));
    const auto ds = testing::random_dataset(20, 3, 2, rng);
    for (int step = 0; step < 10; ++step) {
        std::vector<ParamVector> grads(3, ParamVector(m.num_params(), 0.0));
        std::vector<ParamVector*> ptrs;
        for (std::size_t k = 0; k < 3; ++k) {
            for (std::size_t j = 0; j < ds.size(); ++j) m.accumulate_gradient(ds.x(j), ds.y(j), ens.params[k], 0.1 * (k + 1), grads[k]);
            ptrs.push_back(&grads[k]);
        }
        tie_trunk_gradients(m, ptrs);
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t p = 0; p < m.num_params(); ++p) ens.params[k][p] -= 0.05 * grads[k][p];
        CHECK(ens.trunk_shared(m));
    }
}

TEST_CASE("gradient descent overfits a single sample") {
    Model m(testing::mlp_spec(3, {4}, 3));
    Rng rng(1);
    auto p = m.initialize(rng);
    const std::vector<double> x{0.5, -0.2, 1.0};
    for (int t = 0; t < 2000; ++t) {
        const auto g = m.loss_gradient(x, 2, p);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= 0.5 * g[i];
    }
    CHECK(m.class_probabilities(x, p)[2] > 0.99);
}

TEST_CASE("initialization is seeded and bounded by 1/sqrt(fan_in)") {
    Model m(testing::mlp_spec(16, {4}, 3));
    Rng a(77), b(77);
    const auto pa = m.initialize(a);
    CHECK(pa == m.initialize(b));
    for (std::size_t i = 0; i < 16 * 4 + 4; ++i) CHECK(std::abs(pa[i]) <= 0.25);
    for (std::size_t i = 16 * 4 + 4; i < pa.size(); ++i) CHECK(std::abs(pa[i]) <= 0.5);
}

TEST_CASE("dimension and finiteness errors") {
    Model m(testing::linear_spec(3, 2));
    ParamVector p(m.num_params(), 0.0);
    const std::vector<double> x{1, 2, 3};
    CHECK_THROWS_AS(m.loss(std::vector<double>{1, 2}, 0, p), ConfigError);
    CHECK_THROWS_AS(m.loss(x, 0, ParamVector(3, 0.0)), ConfigError);
    CHECK_THROWS_AS(m.loss(x, 2, p), ConfigError);
    p[1] = std::nan("");
    CHECK_THROWS_AS(m.loss(x, 0, p), NumericError);
    CHECK_THROWS_AS(Model(testing::linear_spec(0, 2)), ConfigError);
    CHECK_THROWS_AS(Model(testing::mlp_spec(2, {}, 2)), ConfigError);
}

TEST_CASE("parameter layout puts the trunk first") {
    Model m(testing::mlp_spec(5, {4, 3}, 2));
    CHECK(m.trunk_size() == 5 * 4 + 4 + 4 * 3 + 3);
    CHECK(m.head_size() == 3 * 2 + 2);
    CHECK(m.num_params() == m.trunk_size() + m.head_size());
    Model lin(testing::linear_spec(5, 2));
    CHECK(lin.trunk_size() == 0);
}
