#include "commands.hpp"

#include <fstream>

#include <json.hpp>

#include "fedrc/error.hpp"
#include "fedrc/parallel.hpp"
#include "fedrc/trainer.hpp"
#include "run_state.hpp"

namespace fedrc::app {
namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot write " + file.string());
    return out;
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

void cmd_generate(const ExperimentConfig& config, const fs::path& out_dir) {
    const FederatedScenario scenario = build_scenario(config);
    write_scenario(scenario, out_dir);
}

void cmd_train(const ExperimentConfig& config, const fs::path& out_dir, std::ostream& log) {
    if (!config.algorithm) throw ConfigError("missing required field 'algorithm'");
    const FederatedScenario scenario = build_scenario(config);
    ModelSpec spec = config.model;
    spec.input_dim = scenario.input_dim;
    spec.num_classes = scenario.num_classes;

    TrainerOptions options;
    options.algorithm = *config.algorithm;
    options.fed = config.fed;
    options.rc = config.rc;
    Trainer trainer(scenario, spec, options);

    std::vector<RoundReport> reports;
    reports.push_back(trainer.report());
    while (trainer.round() < trainer.options().fed.rounds) {
        reports.push_back(trainer.run_round());
        const auto& r = reports.back();
        log << "round " << r.round << "  objective " << r.objective << "  train " << r.train_acc
            << "  global " << r.global_acc << "  active " << r.active_clusters << '\n';
    }

    make_dir(out_dir);
    const std::size_t K = trainer.ensemble().size();
    {
        auto out = open_out(out_dir / "rounds.csv");
        write_rounds_csv(out, reports, K);
    }
    RunSummary summary;
    summary.algorithm = to_string(options.algorithm);
    summary.clusters = K;
    summary.seed = config.seed;
    summary.rounds = reports;
    for (auto a : {Attribute::class_label, Attribute::style, Attribute::concept_id}) {
        summary.composition.push_back(composition(trainer.assignment(), scenario, a));
    }
    summary.purity = purity_from_table(summary.composition.back(), trainer.ensemble().active);
    summary.gamma_converged_round = trainer.gamma_converged_round();
    summary.removed_clusters = trainer.removed_clusters();
    {
        auto out = open_out(out_dir / "summary.json");
        write_summary_json(out, summary);
    }
    RunState state;
    state.algorithm = options.algorithm;
    state.rounds = trainer.round();
    state.fed = trainer.options().fed;
    state.ensemble = trainer.ensemble();
    state.assignment = trainer.assignment();
    state.stats = trainer.stats();
    write_run_state(state, out_dir / "state.json");
    {
        auto out = open_out(out_dir / "config.ini");
        out << to_ini(config);
    }
    write_scenario(scenario, out_dir / "scenario");
}

void cmd_compose(const fs::path& run_dir, Attribute attribute, CompositionMode mode, std::ostream& out) {
    const RunState state = read_run_state(run_dir / "state.json");
    const FederatedScenario scenario = read_scenario(run_dir / "scenario");
    write_composition_csv(out, composition(state.assignment, scenario, attribute, mode));
}

void cmd_eval(const fs::path& run_dir, std::size_t workers, std::ostream& out) {
    using nlohmann::json;
    const RunState state = read_run_state(run_dir / "state.json");
    const FederatedScenario scenario = read_scenario(run_dir / "scenario");
    const Model model(state.ensemble.spec);
    state.ensemble.validate(model);
    if (state.assignment.clients.size() != scenario.participating.size()) {
        throw ConfigError("run state and scenario disagree on the number of clients");
    }

    json j;
    j["algorithm"] = to_string(state.algorithm);
    j["rounds"] = state.rounds;

    const auto& part = scenario.participating;
    std::vector<double> local(part.size());
    parallel_for(part.size(), workers, [&](std::size_t i) {
        local[i] = accuracy(model, state.ensemble, part[i].test, state.assignment.clients[i].omega,
                            PredictionMode::soft);
    });
    double hits = 0.0, total = 0.0;
    for (std::size_t i = 0; i < part.size(); ++i) {
        hits += local[i] * static_cast<double>(part[i].test.size());
        total += static_cast<double>(part[i].test.size());
    }
    j["local_acc"] = total > 0.0 ? hits / total : 0.0;

    const auto& fresh = scenario.nonparticipating;
    std::vector<std::vector<double>> omega(fresh.size());
    std::vector<double> soft(fresh.size()), hard(fresh.size());
    parallel_for(fresh.size(), workers, [&](std::size_t i) {
        omega[i] = adapt_new_client(state.algorithm, model, state.ensemble, state.stats, fresh[i].train, state.fed);
        soft[i] = accuracy(model, state.ensemble, fresh[i].test, omega[i], PredictionMode::soft);
        hard[i] = accuracy(model, state.ensemble, fresh[i].test, omega[i], PredictionMode::hard);
    });
    json clients = json::array();
    double soft_hits = 0.0, hard_hits = 0.0, n = 0.0;
    for (std::size_t i = 0; i < fresh.size(); ++i) {
        const double size = static_cast<double>(fresh[i].test.size());
        clients.push_back({{"concept", fresh[i].concept_id},
                           {"omega", omega[i]},
                           {"global_acc", soft[i]},
                           {"global_acc_hard", hard[i]}});
        soft_hits += soft[i] * size;
        hard_hits += hard[i] * size;
        n += size;
    }
    j["global_acc"] = n > 0.0 ? soft_hits / n : 0.0;
    j["global_acc_hard"] = n > 0.0 ? hard_hits / n : 0.0;
    j["nonparticipating"] = std::move(clients);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed to write evaluation");
}

}  // namespace fedrc::app
