#include <benchmark/benchmark.h>

#include "fedrc/fed_sim.hpp"
#include "fedrc/trainer.hpp"
#include "support.hpp"

using namespace fedrc;

namespace {

// E-step of one client: args are samples and clusters.
void BM_EStepClient(benchmark::State& state) {
    const auto n = std::size_t(state.range(0));
    const auto K = std::size_t(state.range(1));
    Rng rng(1);
    Model m(testing::linear_spec(10, 10));
    std::vector<Dataset> data{testing::random_dataset(n, 10, 10, rng)};
    const auto ens = testing::random_ensemble(m, K, rng, 0.3);
    const std::vector<std::uint8_t> active(K, 1);
    auto s = AssignmentState::uniform(data, active);
    const auto stats = label_stats(s, data, active, 10, 0.0, 0);
    for (auto _ : state) {
        e_step_client(m, data[0], ens, stats, s.clients[0]);
        benchmark::DoNotOptimize(s.clients[0].omega.data());
    }
    state.SetItemsProcessed(state.iterations() * std::int64_t(n * K));
}
BENCHMARK(BM_EStepClient)->Args({128, 3})->Args({1024, 3})->Args({1024, 8});

// Local training of all clusters: args are batch size and hidden width (0 = linear).
void BM_LocalTrain(benchmark::State& state) {
    Rng rng(2);
    const auto hidden = std::size_t(state.range(1));
    Model m(hidden ? testing::mlp_spec(10, {hidden}, 10) : testing::linear_spec(10, 10));
    const auto d = testing::random_dataset(200, 10, 10, rng);
    const auto ens = testing::random_ensemble(m, 3, rng, 0.3);
    const std::vector<std::uint8_t> active(3, 1);
    const auto w = ClientAssignment::uniform(d.size(), active);
    LocalTrainOptions o;
    o.steps = 5;
    o.batch_size = std::size_t(state.range(0));
    for (auto _ : state) {
        Rng local(3);
        benchmark::DoNotOptimize(local_train(m, d, w, ens, active, o, local));
    }
}
BENCHMARK(BM_LocalTrain)->Args({32, 0})->Args({0, 0})->Args({32, 32});

// One full FedRC round on the standard scenario: arg is the worker count.
void BM_RunRound(benchmark::State& state) {
    ScenarioConfig sc;
    apply_preset(sc, "standard");
    sc.seed = 1;
    sc.finalize();
    const auto scen = generate(sc);
    TrainerOptions o;
    o.fed.seed = 1;
    o.fed.workers = std::size_t(state.range(0));
    Trainer t(scen, testing::linear_spec(scen.input_dim, scen.num_classes), o);
    for (auto _ : state) benchmark::DoNotOptimize(t.run_round());
}
BENCHMARK(BM_RunRound)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
