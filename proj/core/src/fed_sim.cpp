#include "fedrc/fed_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedrc/error.hpp"

namespace fedrc {

void FedConfig::validate() const {
    if (clusters == 0) throw ConfigError("fed.clusters must be at least 1");
    if (local_steps == 0 && local_epochs == 0) throw ConfigError("fed.local_steps must be positive");
    if (!(eta_local > 0.0) || !std::isfinite(eta_local)) throw ConfigError("fed.eta_local must be positive");
    if (!(eta_global > 0.0) || !std::isfinite(eta_global)) throw ConfigError("fed.eta_global must be positive");
    if (!(participation > 0.0 && participation <= 1.0)) {
        throw ConfigError("fed.participation must be in (0, 1]");
    }
    if (!(removal_threshold >= 0.0 && removal_threshold < 1.0)) {
        throw ConfigError("fed.removal_threshold must be in [0, 1)");
    }
    if (!(convergence_tol > 0.0)) throw ConfigError("fed.convergence_tol must be positive");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw ConfigError("fed.noise_sigma must be nonnegative");
    }
    if (new_client_estep_cap == 0) throw ConfigError("fed.new_client_estep_cap must be positive");
    if (!(new_client_tol > 0.0)) throw ConfigError("fed.new_client_tol must be positive");
    if (workers == 0) throw ConfigError("workers must be at least 1");
}

LocalTrainOptions LocalTrainOptions::from(const FedConfig& config, std::size_t client) {
    LocalTrainOptions o;
    o.steps = config.local_steps;
    o.epochs = config.local_epochs;
    o.batch_size = config.batch_size;
    o.eta = config.eta_local;
    o.client = client;
    return o;
}

std::size_t LocalTrainOptions::steps_for(std::size_t samples) const {
    if (epochs == 0) return steps;
    const std::size_t b = (batch_size == 0 || batch_size >= samples) ? samples : batch_size;
    if (b == 0) return 0;
    return epochs * ((samples + b - 1) / b);
}

std::vector<std::size_t> sample_clients(std::size_t num_clients, double fraction, Rng& rng) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("participation must be in (0, 1]");
    // The small slack keeps e.g. 0.1 * 60 at 6 despite rounding.
    auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(num_clients) - 1e-9));
    count = std::min(count, num_clients);
    if (count == 0) throw ConfigError("no client selected");
    if (count == num_clients) {
        std::vector<std::size_t> all(num_clients);
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
    }
    return sample_without_replacement(num_clients, count, rng);
}

namespace {

// Minibatch index sequence: epoch-wise shuffles, consumed batch_size at a time.
class BatchStream {
public:
    BatchStream(std::size_t n, std::size_t batch, Rng& rng) : order_(n), batch_(batch), rng_(rng) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        full_ = batch_ == 0 || batch_ >= n;
        pos_ = n;
    }

    std::span<const std::size_t> next() {
        if (full_) return order_;
        if (pos_ >= order_.size()) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            pos_ = 0;
        }
        const std::size_t len = std::min(batch_, order_.size() - pos_);
        std::span<const std::size_t> out(order_.data() + pos_, len);
        pos_ += len;
        return out;
    }

private:
    std::vector<std::size_t> order_;
    std::size_t batch_;
    Rng& rng_;
    bool full_ = false;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<ParamVector> local_train(const Model& model, const Dataset& data,
                                     const ClientAssignment& weights, const ClusterEnsemble& start,
                                     std::span<const std::uint8_t> train_mask,
                                     const LocalTrainOptions& options, Rng& rng) {
    const std::size_t K = start.size();
    if (train_mask.size() != K || weights.num_clusters != K || weights.num_samples() != data.size()) {
        throw ConfigError("local_train: inconsistent shapes");
    }
    std::vector<ParamVector> theta(K);
    std::vector<std::size_t> trained;
    for (std::size_t k = 0; k < K; ++k) {
        if (train_mask[k] && start.is_active(k)) {
            theta[k] = start.params[k];
            trained.push_back(k);
        }
    }
    if (trained.empty() || data.empty()) return theta;

    const bool tie = model.spec().shared_trunk && model.trunk_size() > 0 && trained.size() > 1;
    const std::size_t steps = options.steps_for(data.size());
    BatchStream batches(data.size(), options.batch_size, rng);
    std::vector<ParamVector> grads(K);
    std::vector<ParamVector*> tied;
    for (std::size_t k : trained) {
        grads[k].assign(model.num_params(), 0.0);
        tied.push_back(&grads[k]);
    }

    for (std::size_t s = 0; s < steps; ++s) {
        const auto batch = batches.next();
        const double scale = 1.0 / static_cast<double>(batch.size());
        for (std::size_t k : trained) {
            std::fill(grads[k].begin(), grads[k].end(), 0.0);
            for (std::size_t j : batch) {
                const double w = weights.gamma[j * K + k];
                if (w == 0.0) continue;
                model.accumulate_gradient(data.x(j), data.y(j), theta[k], w * scale, grads[k]);
            }
        }
        if (tie) tie_trunk_gradients(model, tied);
        for (std::size_t k : trained) {
            for (std::size_t p = 0; p < theta[k].size(); ++p) theta[k][p] -= options.eta * grads[k][p];
            if (!all_finite(theta[k])) {
                throw NumericError("non-finite parameters after local step " + std::to_string(s) +
                                   " on client " + std::to_string(options.client) + ", cluster " +
                                   std::to_string(k));
            }
        }
    }
    return theta;
}

ParamVector local_train(const Model& model, const Dataset& data, std::span<const double> gamma_k,
                        const ParamVector& start, const LocalTrainOptions& options, Rng& rng) {
    if (gamma_k.size() != data.size()) throw ConfigError("local_train: one weight per sample expected");
    ClusterEnsemble one;
    one.spec = model.spec();
    one.params = {start};
    one.active = {1};
    ClientAssignment w;
    w.num_clusters = 1;
    w.gamma.assign(gamma_k.begin(), gamma_k.end());
    w.omega = {1.0};
    const std::uint8_t mask[] = {1};
    return std::move(local_train(model, data, w, one, mask, options, rng).front());
}

namespace {

// theta + eta_g * sum_i w_i (local_i - theta) on [begin, end), where
// `locals` are the contributing clients' vectors and `counts` their sizes.
void combine(std::span<double> theta, std::span<const ParamVector* const> locals,
             std::span<const std::size_t> counts, double eta_g, std::size_t begin, std::size_t end) {
    if (locals.empty()) return;
    if (locals.size() == 1 && eta_g == 1.0) {
        std::copy(locals[0]->begin() + static_cast<std::ptrdiff_t>(begin),
                  locals[0]->begin() + static_cast<std::ptrdiff_t>(end),
                  theta.begin() + static_cast<std::ptrdiff_t>(begin));
        return;
    }
    double total = 0.0;
    for (auto n : counts) total += static_cast<double>(n);
    if (!(total > 0.0)) return;
    for (std::size_t p = begin; p < end; ++p) {
        double delta = 0.0;
        for (std::size_t i = 0; i < locals.size(); ++i) {
            delta += static_cast<double>(counts[i]) / total * ((*locals[i])[p] - theta[p]);
        }
        theta[p] += eta_g * delta;
    }
}

}  // namespace

ClusterEnsemble aggregate(const Model& model, const ClusterEnsemble& ensemble,
                          std::span<const ClientUpdate> updates, double eta_global) {
    const std::size_t K = ensemble.size();
    for (const auto& u : updates) {
        if (u.local_params.size() != K) throw ConfigError("client update has wrong cluster count");
    }
    ClusterEnsemble out = ensemble;
    const bool shared = model.spec().shared_trunk && model.trunk_size() > 0;
    const std::size_t head_begin = shared ? model.trunk_size() : 0;

    for (std::size_t k = 0; k < K; ++k) {
        if (!ensemble.is_active(k)) continue;
        std::vector<const ParamVector*> locals;
        std::vector<std::size_t> counts;
        for (const auto& u : updates) {
            if (u.local_params[k].empty()) continue;
            if (u.local_params[k].size() != model.num_params()) {
                throw ConfigError("client update has wrong parameter count");
            }
            locals.push_back(&u.local_params[k]);
            counts.push_back(u.sample_count);
        }
        combine(out.params[k], locals, counts, eta_global, head_begin, model.num_params());
    }

    if (shared) {
        // One trunk per contributing client (all its trained copies share it).
        std::vector<const ParamVector*> locals;
        std::vector<std::size_t> counts;
        for (const auto& u : updates) {
            for (std::size_t k = 0; k < K; ++k) {
                if (!u.local_params[k].empty() && ensemble.is_active(k)) {
                    locals.push_back(&u.local_params[k]);
                    counts.push_back(u.sample_count);
                    break;
                }
            }
        }
        const auto act = ensemble.active_indices();
        ParamVector trunk = ensemble.params[act.front()];
        combine(trunk, locals, counts, eta_global, 0, model.trunk_size());
        for (std::size_t k : act) {
            std::copy(trunk.begin(), trunk.begin() + static_cast<std::ptrdiff_t>(model.trunk_size()),
                      out.params[k].begin());
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (out.is_active(k) && !all_finite(out.params[k])) {
            throw NumericError("non-finite parameters after aggregation in cluster " + std::to_string(k));
        }
    }
    return out;
}

std::vector<double> cluster_mass_fractions(const AssignmentState& state) {
    const std::size_t K = state.num_clusters;
    std::vector<double> mass(K, 0.0);
    std::size_t n = 0;
    for (const auto& c : state.clients) {
        for (std::size_t j = 0; j < c.num_samples(); ++j) {
            for (std::size_t k = 0; k < K; ++k) mass[k] += c.gamma[j * K + k];
        }
        n += c.num_samples();
    }
    if (n > 0) {
        for (auto& m : mass) m /= static_cast<double>(n);
    }
    return mass;
}

std::vector<std::size_t> check_and_remove(ClusterEnsemble& ensemble, AssignmentState& state,
                                          double delta) {
    const std::size_t K = ensemble.size();
    if (state.num_clusters != K) throw ConfigError("assignment/ensemble cluster count mismatch");
    const auto frac = cluster_mass_fractions(state);
    const auto act = ensemble.active_indices();

    std::vector<std::size_t> removed;
    for (std::size_t k : act) {
        if (frac[k] < delta) removed.push_back(k);
    }
    if (removed.size() == act.size()) {
        // Keep the heaviest cluster (lowest index on ties).
        std::size_t keep = act.front();
        for (std::size_t k : act) {
            if (frac[k] > frac[keep]) keep = k;
        }
        std::erase(removed, keep);
    }
    if (removed.empty()) return removed;

    for (std::size_t k : removed) ensemble.active[k] = 0;
    for (auto& c : state.clients) {
        for (std::size_t j = 0; j < c.num_samples(); ++j) {
            auto row = c.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                if (!ensemble.active[k]) row[k] = 0.0;
                s += row[k];
            }
            if (s > 0.0) {
                for (auto& v : row) v /= s;
            } else {
                const double w = 1.0 / static_cast<double>(ensemble.num_active());
                for (std::size_t k = 0; k < K; ++k) row[k] = ensemble.active[k] ? w : 0.0;
            }
        }
        for (std::size_t k : removed) {
            for (std::size_t j = 0; j < c.num_samples(); ++j) {
                if (!c.adam_nu.empty()) c.adam_nu[j * K + k] = 0.0;
                if (!c.adam_a.empty()) c.adam_a[j * K + k] = 0.0;
            }
        }
        recompute_omega(c);
    }
    return removed;
}

std::vector<double> evaluate_new_client(const Model& model, const Dataset& adaptation,
                                        const ClusterEnsemble& ensemble, const LabelStats& stats,
                                        EKernel kernel, std::size_t max_iterations, double tol) {
    if (adaptation.empty()) throw ConfigError("new client has an empty adaptation split");
    ClientAssignment c = ClientAssignment::uniform(adaptation.size(), ensemble.active);
    for (std::size_t it = 0; it < max_iterations; ++it) {
        const auto before = c.omega;
        e_step_client(model, adaptation, ensemble, stats, c, kernel);
        double change = 0.0;
        for (std::size_t k = 0; k < before.size(); ++k) change = std::max(change, std::abs(c.omega[k] - before[k]));
        if (change < tol) break;
    }
    return c.omega;
}

}  // namespace fedrc
