#include "fedrc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "fedrc/error.hpp"
#include "fedrc/parallel.hpp"

namespace fedrc {
namespace {

double max_abs_change(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

ClientAssignment one_hot(std::size_t samples, std::size_t clusters, std::size_t k) {
    ClientAssignment c;
    c.num_clusters = clusters;
    c.gamma.assign(samples * clusters, 0.0);
    for (std::size_t j = 0; j < samples; ++j) c.gamma[j * clusters + k] = 1.0;
    c.omega.assign(clusters, 0.0);
    c.omega[k] = 1.0;
    return c;
}

struct Hits {
    std::size_t hits = 0;
    std::size_t total = 0;

    void add(double acc, std::size_t n) {
        hits += static_cast<std::size_t>(std::llround(acc * static_cast<double>(n)));
        total += n;
    }
    double rate() const { return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total); }
};

}  // namespace

std::vector<double> adapt_new_client(BaselineKind algorithm, const Model& model,
                                     const ClusterEnsemble& ensemble, const LabelStats& stats,
                                     const Dataset& adaptation, const FedConfig& fed) {
    switch (algorithm) {
        case BaselineKind::ifca:
        case BaselineKind::fesem:
            return one_hot(0, ensemble.size(), select_by_loss(model, adaptation, ensemble)).omega;
        case BaselineKind::fedem:
            return evaluate_new_client(model, adaptation, ensemble, stats, EKernel::likelihood,
                                       fed.new_client_estep_cap, fed.new_client_tol);
        case BaselineKind::fedavg:
        case BaselineKind::fedrc:
            break;
    }
    return evaluate_new_client(model, adaptation, ensemble, stats, EKernel::ratio,
                               fed.new_client_estep_cap, fed.new_client_tol);
}

Trainer::Trainer(const FederatedScenario& scenario, ModelSpec spec, TrainerOptions options)
    : scenario_(scenario), options_(std::move(options)), model_((spec.validate(), spec)) {
    if (options_.algorithm == BaselineKind::fedavg) options_.fed.clusters = 1;
    options_.fed.validate();
    options_.rc.validate();
    if (options_.algorithm == BaselineKind::ifca && options_.fed.clusters < 2) {
        throw ConfigError(to_string(options_.algorithm) + " needs at least 2 clusters");
    }
    if (scenario_.participating.empty()) throw ConfigError("scenario has no participating client");
    if (spec.input_dim != scenario_.input_dim || spec.num_classes != scenario_.num_classes) {
        throw ConfigError("model dimensions do not match the scenario");
    }
    train_ = scenario_.train_sets();
    ensemble_ = ClusterEnsemble::initialize(model_, options_.fed.clusters, options_.fed.seed);
    state_ = AssignmentState::uniform(train_, ensemble_.active);
    refresh_all_contributions("noise");
}

void Trainer::refresh_all_contributions(std::string_view stream) {
    contributions_.resize(train_.size());
    for (std::size_t i = 0; i < train_.size(); ++i) {
        Rng rng = make_rng(options_.fed.seed, stream, round_, i);
        contributions_[i] = client_label_mass(train_[i], state_.clients[i], model_.num_classes(),
                                              ensemble_.active, options_.fed.noise_sigma, rng);
    }
    rebuild_stats();
}

void Trainer::rebuild_stats() {
    stats_ = aggregate_label_stats(contributions_, ensemble_.active, model_.num_classes(),
                                   options_.fed.noise_sigma, options_.rc.eps_floor);
}

RoundReport Trainer::run_round() {
    const auto& fed = options_.fed;
    ++round_;
    last_removed_.clear();

    if (options_.algorithm == BaselineKind::fedrc && fed.removal_enabled &&
        round_ - 1 >= fed.removal_warmup && last_change_ < fed.convergence_tol) {
        last_removed_ = check_and_remove(ensemble_, state_, fed.removal_threshold);
        if (!last_removed_.empty()) {
            removed_.insert(removed_.end(), last_removed_.begin(), last_removed_.end());
            refresh_all_contributions("noise-removal");
        }
    }

    Rng sampling = make_rng(fed.seed, "sampling", round_);
    const auto selected = sample_clients(train_.size(), fed.participation, sampling);
    const std::size_t K = ensemble_.size();

    std::vector<ClientUpdate> updates(selected.size());
    std::vector<ClientAssignment> next(selected.size());

    if (is_hard_clustering(options_.algorithm)) {
        HardRound hr = options_.algorithm == BaselineKind::ifca
                           ? ifca_round(model_, ensemble_, train_, selected, fed, round_)
                           : fesem_round(model_, ensemble_, train_, selected, fed, round_);
        for (std::size_t s = 0; s < selected.size(); ++s) {
            next[s] = one_hot(train_[selected[s]].size(), K, hr.choice[s]);
        }
        updates = std::move(hr.updates);
        ensemble_ = std::move(hr.ensemble);
    } else {
        parallel_for(selected.size(), fed.workers, [&](std::size_t s) {
            const std::size_t i = selected[s];
            ClientAssignment a = state_.clients[i];
            ClientUpdate& u = updates[s];
            u.client = i;
            u.sample_count = train_[i].size();
            if (options_.algorithm == BaselineKind::fedem) {
                u.diagnostics = fedem_e_step(model_, train_[i], ensemble_, a);
            } else if (options_.rc.adam_enabled) {
                u.diagnostics = e_step_adam_client(model_, train_[i], ensemble_, stats_, a, options_.rc);
            } else {
                u.diagnostics = e_step_client(model_, train_[i], ensemble_, stats_, a);
            }
            Rng rng = make_rng(fed.seed, "local", round_, i);
            u.local_params = local_train(model_, train_[i], a, ensemble_, ensemble_.active,
                                         LocalTrainOptions::from(fed, i), rng);
            next[s] = std::move(a);
        });
        ensemble_ = aggregate(model_, ensemble_, updates, fed.eta_global);
    }

    double change = 0.0;
    std::size_t fallbacks = 0;
    for (std::size_t s = 0; s < selected.size(); ++s) {
        const std::size_t i = selected[s];
        change = std::max(change, max_abs_change(next[s].gamma, state_.clients[i].gamma));
        fallbacks += updates[s].diagnostics.uniform_fallbacks;
        if (is_hard_clustering(options_.algorithm)) {
            next[s].adam_nu = std::move(state_.clients[i].adam_nu);
            next[s].adam_a = std::move(state_.clients[i].adam_a);
        }
        state_.clients[i] = std::move(next[s]);
        Rng rng = make_rng(fed.seed, "noise", round_, i);
        contributions_[i] = client_label_mass(train_[i], state_.clients[i], model_.num_classes(),
                                              ensemble_.active, fed.noise_sigma, rng);
    }
    rebuild_stats();
    last_change_ = change;
    last_fallbacks_ = fallbacks;
    if (!converged_round_ && change < fed.convergence_tol) converged_round_ = round_;
    return report();
}

RoundReport Trainer::report() const {
    RoundReport r;
    r.round = round_;
    r.objective = objective(model_, state_, ensemble_, stats_, train_, options_.fed.workers);
    r.active_clusters = ensemble_.num_active();
    r.gamma_change = round_ == 0 ? 0.0 : last_change_;
    r.uniform_fallbacks = last_fallbacks_;
    r.cluster_mass = cluster_mass_fractions(state_);
    r.removed = last_removed_;
    r.concept_purity = concept_purity(state_, scenario_, ensemble_.active).weighted;

    const auto& part = scenario_.participating;
    std::vector<double> train_acc(part.size()), local_acc(part.size());
    parallel_for(part.size(), options_.fed.workers, [&](std::size_t i) {
        const auto& omega = state_.clients[i].omega;
        train_acc[i] = accuracy(model_, ensemble_, part[i].train, omega, PredictionMode::soft);
        local_acc[i] = accuracy(model_, ensemble_, part[i].test, omega, PredictionMode::soft);
    });
    Hits tr, lo;
    for (std::size_t i = 0; i < part.size(); ++i) {
        tr.add(train_acc[i], part[i].train.size());
        lo.add(local_acc[i], part[i].test.size());
    }
    r.train_acc = tr.rate();
    r.local_acc = lo.rate();

    const auto& fresh = scenario_.nonparticipating;
    std::vector<double> soft(fresh.size()), hard(fresh.size());
    parallel_for(fresh.size(), options_.fed.workers, [&](std::size_t i) {
        const auto omega = adapt_new_client(fresh[i].train);
        soft[i] = accuracy(model_, ensemble_, fresh[i].test, omega, PredictionMode::soft);
        hard[i] = accuracy(model_, ensemble_, fresh[i].test, omega, PredictionMode::hard);
    });
    Hits gs, gh;
    for (std::size_t i = 0; i < fresh.size(); ++i) {
        gs.add(soft[i], fresh[i].test.size());
        gh.add(hard[i], fresh[i].test.size());
    }
    r.global_acc = gs.rate();
    r.global_acc_hard = gh.rate();
    return r;
}

std::vector<RoundReport> Trainer::run() {
    std::vector<RoundReport> out;
    out.reserve(options_.fed.rounds + 1);
    out.push_back(report());
    while (round_ < options_.fed.rounds) out.push_back(run_round());
    return out;
}

}  // namespace fedrc
