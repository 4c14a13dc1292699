#include "fedrc/rc_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedrc/error.hpp"
#include "fedrc/parallel.hpp"

namespace fedrc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t count_active(std::span<const std::uint8_t> active) {
    return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
}

void fill_uniform(std::span<double> row, std::span<const std::uint8_t> active) {
    const double w = 1.0 / static_cast<double>(count_active(active));
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = active[k] ? w : 0.0;
}

void check_client(const ClientAssignment& c, const Dataset& d, std::size_t clusters) {
    if (c.num_clusters != clusters || c.num_samples() != d.size() || c.omega.size() != clusters) {
        throw ConfigError("assignment shape does not match dataset/ensemble");
    }
}

}  // namespace

void RCHyper::validate() const {
    if (!(eta > 0.0)) throw ConfigError("rc.eta must be positive");
    if (!(eps_floor > 0.0)) throw ConfigError("rc.eps_floor must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("rc.adam_beta1 must be in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("rc.adam_beta2 must be in [0, 1)");
    if (!(adam_alpha > 0.0)) throw ConfigError("rc.adam_alpha must be positive");
    if (!(adam_eps >= 0.0)) throw ConfigError("rc.adam_eps must be nonnegative");
}

ClientAssignment ClientAssignment::uniform(std::size_t samples, std::span<const std::uint8_t> active) {
    if (count_active(active) == 0) throw ConfigError("no active cluster");
    ClientAssignment c;
    c.num_clusters = active.size();
    c.gamma.assign(samples * active.size(), 0.0);
    c.omega.assign(active.size(), 0.0);
    for (std::size_t j = 0; j < samples; ++j) fill_uniform(c.row(j), active);
    // The sample mean of 1/K rows is not always bit-equal to 1/K; omega must
    // be the mean itself.
    if (samples > 0) recompute_omega(c);
    else fill_uniform(c.omega, active);
    return c;
}

AssignmentState AssignmentState::uniform(std::span<const Dataset> data,
                                         std::span<const std::uint8_t> active) {
    AssignmentState s;
    s.num_clusters = active.size();
    s.clients.reserve(data.size());
    for (const auto& d : data) s.clients.push_back(ClientAssignment::uniform(d.size(), active));
    return s;
}

double i_tilde(const Model& model, std::span<const double> x, int y, std::span<const double> theta,
               std::size_t k, const LabelStats& stats, Diagnostics* diag) {
    const double f = model.loss(x, y, theta);
    double mass = stats.mass(k, y);
    if (!(mass > stats.eps_floor)) {
        mass = stats.eps_floor;
        if (diag) ++diag->floored_pairs;
    }
    const double total = std::max(stats.total_mass[k], stats.eps_floor);
    return std::exp(-f) * total / mass;
}

void log_kernel(const Model& model, const Dataset& data, const ClusterEnsemble& ensemble,
                const LabelStats* stats, EKernel kernel, std::vector<double>& out,
                Diagnostics* diag) {
    const std::size_t K = ensemble.size();
    out.assign(data.size() * K, kNegInf);
    if (kernel == EKernel::ratio && !stats) throw ConfigError("ratio kernel needs label statistics");
    for (std::size_t j = 0; j < data.size(); ++j) {
        const int y = data.y(j);
        for (std::size_t k = 0; k < K; ++k) {
            if (!ensemble.is_active(k)) continue;
            double v = -model.loss(data.x(j), y, ensemble.params[k]);
            if (kernel == EKernel::ratio) {
                double mass = stats->mass(k, y);
                if (!(mass > stats->eps_floor)) {
                    mass = stats->eps_floor;
                    if (diag) ++diag->floored_pairs;
                }
                const double total = std::max(stats->total_mass[k], stats->eps_floor);
                v += std::log(total) - std::log(mass);
            }
            out[j * K + k] = v;
        }
    }
}

Diagnostics responsibilities(std::span<const double> log_kernel, std::span<const double> omega,
                             std::span<const std::uint8_t> active, std::span<double> gamma) {
    const std::size_t K = active.size();
    if (K == 0 || omega.size() != K || log_kernel.size() != gamma.size() || gamma.size() % K != 0) {
        throw ConfigError("responsibilities: inconsistent shapes");
    }
    Diagnostics diag;
    std::vector<double> logw(K);
    for (std::size_t j = 0; j < gamma.size() / K; ++j) {
        double m = kNegInf;
        for (std::size_t k = 0; k < K; ++k) {
            logw[k] = active[k] ? std::log(omega[k]) + log_kernel[j * K + k] : kNegInf;
            if (std::isnan(logw[k])) throw NumericError("E-step weight is NaN");
            m = std::max(m, logw[k]);
        }
        std::span<double> row = gamma.subspan(j * K, K);
        if (!std::isfinite(m)) {
            // Every omega * Ĩ vanished (or overflowed).
            fill_uniform(row, active);
            ++diag.uniform_fallbacks;
            continue;
        }
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            row[k] = active[k] ? std::exp(logw[k] - m) : 0.0;
            s += row[k];
        }
        for (std::size_t k = 0; k < K; ++k) row[k] /= s;
    }
    return diag;
}

void recompute_omega(ClientAssignment& client) {
    const std::size_t K = client.num_clusters;
    const std::size_t n = client.num_samples();
    std::fill(client.omega.begin(), client.omega.end(), 0.0);
    if (n == 0) return;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < K; ++k) client.omega[k] += client.gamma[j * K + k];
    }
    for (auto& w : client.omega) w /= static_cast<double>(n);
}

Diagnostics e_step_client(const Model& model, const Dataset& data, const ClusterEnsemble& ensemble,
                          const LabelStats& stats, ClientAssignment& client, EKernel kernel) {
    check_client(client, data, ensemble.size());
    Diagnostics diag;
    std::vector<double> lk;
    log_kernel(model, data, ensemble, &stats, kernel, lk, &diag);
    diag += responsibilities(lk, client.omega, ensemble.active, client.gamma);
    recompute_omega(client);
    return diag;
}

Diagnostics e_step(const Model& model, std::span<const Dataset> data,
                   const ClusterEnsemble& ensemble, const LabelStats& stats,
                   AssignmentState& state, std::size_t workers) {
    if (state.clients.size() != data.size()) throw ConfigError("assignment/data client count mismatch");
    std::vector<Diagnostics> per(data.size());
    parallel_for(data.size(), workers, [&](std::size_t i) {
        per[i] = e_step_client(model, data[i], ensemble, stats, state.clients[i]);
    });
    Diagnostics total;
    for (const auto& d : per) total += d;
    return total;
}

Diagnostics adam_update(ClientAssignment& client, std::span<const double> target,
                        std::span<const std::uint8_t> active, const RCHyper& hyper) {
    const std::size_t K = client.num_clusters;
    if (target.size() != client.gamma.size() || active.size() != K) {
        throw ConfigError("adam_update: inconsistent shapes");
    }
    if (client.adam_nu.size() != client.gamma.size()) client.adam_nu.assign(client.gamma.size(), 0.0);
    if (client.adam_a.size() != client.gamma.size()) client.adam_a.assign(client.gamma.size(), 0.0);

    const double b1 = hyper.adam_beta1;
    const double b2 = hyper.adam_beta2;
    Diagnostics diag;
    for (std::size_t j = 0; j < client.num_samples(); ++j) {
        std::span<double> row = client.row(j);
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t idx = j * K + k;
            if (!active[k]) {
                row[k] = 0.0;
                continue;
            }
            const double g = row[k] - target[idx];
            double& nu = client.adam_nu[idx];
            double& a = client.adam_a[idx];
            nu = (1.0 - b1) * g + b1 * nu;
            a = (1.0 - b2) * g * g + b2 * a;
            const double step =
                hyper.adam_alpha * (nu / (1.0 - b1)) / (std::sqrt(a / (1.0 - b2)) + hyper.adam_eps);
            row[k] = std::max(row[k] - step, 0.0);
            s += row[k];
        }
        if (!(s > 0.0) || !std::isfinite(s)) {
            fill_uniform(row, active);
            ++diag.uniform_fallbacks;
            continue;
        }
        for (auto& v : row) v /= s;
    }
    recompute_omega(client);
    return diag;
}

Diagnostics e_step_adam_client(const Model& model, const Dataset& data,
                               const ClusterEnsemble& ensemble, const LabelStats& stats,
                               ClientAssignment& client, const RCHyper& hyper, EKernel kernel) {
    check_client(client, data, ensemble.size());
    Diagnostics diag;
    std::vector<double> lk;
    log_kernel(model, data, ensemble, &stats, kernel, lk, &diag);
    std::vector<double> target(client.gamma.size());
    diag += responsibilities(lk, client.omega, ensemble.active, target);
    diag += adam_update(client, target, ensemble.active, hyper);
    return diag;
}

Diagnostics e_step_adam(const Model& model, std::span<const Dataset> data,
                        const ClusterEnsemble& ensemble, const LabelStats& stats,
                        AssignmentState& state, const RCHyper& hyper, std::size_t workers) {
    if (state.clients.size() != data.size()) throw ConfigError("assignment/data client count mismatch");
    std::vector<Diagnostics> per(data.size());
    parallel_for(data.size(), workers, [&](std::size_t i) {
        per[i] = e_step_adam_client(model, data[i], ensemble, stats, state.clients[i], hyper);
    });
    Diagnostics total;
    for (const auto& d : per) total += d;
    return total;
}

ClientLabelMass client_label_mass(const Dataset& data, const ClientAssignment& client,
                                  std::size_t num_classes, std::span<const std::uint8_t> active,
                                  double noise_sigma, Rng& rng) {
    const std::size_t K = client.num_clusters;
    if (active.size() != K || client.num_samples() != data.size()) {
        throw ConfigError("client_label_mass: inconsistent shapes");
    }
    ClientLabelMass out;
    out.label_mass.assign(K * num_classes, 0.0);
    out.total_mass.assign(K, 0.0);
    for (std::size_t j = 0; j < data.size(); ++j) {
        const auto y = static_cast<std::size_t>(data.y(j));
        if (y >= num_classes) throw ConfigError("label outside [0, num_classes)");
        for (std::size_t k = 0; k < K; ++k) {
            out.label_mass[k * num_classes + y] += client.gamma[j * K + k];
            out.total_mass[k] += client.gamma[j * K + k];
        }
    }
    if (noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, noise_sigma);
        for (std::size_t k = 0; k < K; ++k) {
            if (!active[k]) continue;
            for (std::size_t y = 0; y < num_classes; ++y) out.label_mass[k * num_classes + y] += noise(rng);
        }
    }
    return out;
}

LabelStats aggregate_label_stats(std::span<const ClientLabelMass> parts,
                                 std::span<const std::uint8_t> active, std::size_t num_classes,
                                 double noise_sigma, double eps_floor) {
    const std::size_t K = active.size();
    LabelStats s;
    s.num_clusters = K;
    s.num_classes = num_classes;
    s.noise_sigma = noise_sigma;
    s.eps_floor = eps_floor;
    s.label_mass.assign(K * num_classes, 0.0);
    s.total_mass.assign(K, 0.0);
    for (const auto& p : parts) {
        if (p.label_mass.size() != K * num_classes || p.total_mass.size() != K) {
            throw ConfigError("label mass contribution has wrong shape");
        }
        for (std::size_t i = 0; i < s.label_mass.size(); ++i) s.label_mass[i] += p.label_mass[i];
        for (std::size_t k = 0; k < K; ++k) s.total_mass[k] += p.total_mass[k];
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (!active[k]) {
            std::fill_n(s.label_mass.begin() + static_cast<std::ptrdiff_t>(k * num_classes), num_classes, 0.0);
            s.total_mass[k] = 0.0;
            continue;
        }
        for (std::size_t y = 0; y < num_classes; ++y) {
            double& m = s.label_mass[k * num_classes + y];
            if (!(m >= eps_floor)) {
                m = eps_floor;
                ++s.floored;
            }
        }
        if (!(s.total_mass[k] >= eps_floor)) {
            s.total_mass[k] = eps_floor;
            ++s.floored;
        }
    }
    return s;
}

LabelStats label_stats(const AssignmentState& state, std::span<const Dataset> data,
                       std::span<const std::uint8_t> active, std::size_t num_classes,
                       double noise_sigma, std::uint64_t noise_seed, double eps_floor) {
    if (state.clients.size() != data.size()) throw ConfigError("assignment/data client count mismatch");
    std::vector<ClientLabelMass> parts;
    parts.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        Rng rng = make_rng(noise_seed, "label-noise", i);
        parts.push_back(client_label_mass(data[i], state.clients[i], num_classes, active, noise_sigma, rng));
    }
    return aggregate_label_stats(parts, active, num_classes, noise_sigma, eps_floor);
}

double objective(const Model& model, const AssignmentState& state, const ClusterEnsemble& ensemble,
                 const LabelStats& stats, std::span<const Dataset> data, std::size_t workers) {
    if (state.clients.size() != data.size()) throw ConfigError("assignment/data client count mismatch");
    const std::size_t K = ensemble.size();
    std::vector<double> partial(data.size(), 0.0);
    parallel_for(data.size(), workers, [&](std::size_t i) {
        const auto& client = state.clients[i];
        check_client(client, data[i], K);
        std::vector<double> lk;
        log_kernel(model, data[i], ensemble, &stats, EKernel::ratio, lk);
        double acc = 0.0;
        for (std::size_t j = 0; j < data[i].size(); ++j) {
            double m = kNegInf;
            for (std::size_t k = 0; k < K; ++k) {
                if (ensemble.is_active(k) && client.omega[k] > 0.0) {
                    m = std::max(m, std::log(client.omega[k]) + lk[j * K + k]);
                }
            }
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                if (ensemble.is_active(k) && client.omega[k] > 0.0) {
                    s += std::exp(std::log(client.omega[k]) + lk[j * K + k] - m);
                }
            }
            const double term = m + std::log(s);
            if (!std::isfinite(term)) {
                throw NumericError("objective term not finite at client " + std::to_string(i) +
                                   " sample " + std::to_string(j));
            }
            acc += term;
        }
        partial[i] = acc;
    });
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        total += partial[i];
        n += data[i].size();
    }
    if (n == 0) throw ConfigError("objective over empty data");
    return total / static_cast<double>(n);
}

ClusterEnsemble m_step_centralized(const Model& model, const AssignmentState& state,
                                   const ClusterEnsemble& ensemble, std::span<const Dataset> data,
                                   double eta, std::size_t workers) {
    if (state.clients.size() != data.size()) throw ConfigError("assignment/data client count mismatch");
    ensemble.validate(model);
    const std::size_t K = ensemble.size();
    const std::size_t P = model.num_params();
    // Per-client gradient sums, folded in client order afterwards.
    std::vector<std::vector<ParamVector>> partial(data.size());
    parallel_for(data.size(), workers, [&](std::size_t i) {
        const auto& client = state.clients[i];
        check_client(client, data[i], K);
        auto& g = partial[i];
        g.assign(K, ParamVector());
        for (std::size_t k = 0; k < K; ++k) {
            if (!ensemble.is_active(k)) continue;
            g[k].assign(P, 0.0);
            for (std::size_t j = 0; j < data[i].size(); ++j) {
                const double w = client.gamma[j * K + k];
                if (w == 0.0) continue;
                model.accumulate_gradient(data[i].x(j), data[i].y(j), ensemble.params[k], w, g[k]);
            }
        }
    });
    std::size_t n = 0;
    for (const auto& d : data) n += d.size();
    if (n == 0) throw ConfigError("M-step over empty data");

    std::vector<ParamVector> total(K);
    std::vector<ParamVector*> active_grads;
    for (std::size_t k = 0; k < K; ++k) {
        if (!ensemble.is_active(k)) continue;
        total[k].assign(P, 0.0);
        for (const auto& g : partial) {
            for (std::size_t p = 0; p < P; ++p) total[k][p] += g[k][p];
        }
        active_grads.push_back(&total[k]);
    }
    if (model.spec().shared_trunk) tie_trunk_gradients(model, active_grads);

    ClusterEnsemble next = ensemble;
    const double scale = eta / static_cast<double>(n);
    for (std::size_t k = 0; k < K; ++k) {
        if (!ensemble.is_active(k)) continue;
        for (std::size_t p = 0; p < P; ++p) next.params[k][p] -= scale * total[k][p];
        if (!all_finite(next.params[k])) {
            throw NumericError("M-step produced non-finite parameters for cluster " + std::to_string(k));
        }
    }
    return next;
}

double theorem_step_size(double smoothness, double grad_sq_bound) {
    const double denom = 40.0 * smoothness + 9.0 * grad_sq_bound;
    if (!(denom > 0.0)) throw NumericError("step size denominator must be positive");
    return 8.0 / denom;
}

StepSizeEstimate estimate_step_size(const Model& model, const ClusterEnsemble& ensemble,
                                    std::span<const Dataset> data, std::uint64_t seed) {
    const std::size_t P = model.num_params();
    Rng rng = make_rng(seed, "step-size");
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr double radii[] = {1e-3, 1e-2, 1e-1, 1.0};
    constexpr std::size_t kProbesPerClient = 16;

    StepSizeEstimate est;
    for (std::size_t k = 0; k < ensemble.size(); ++k) {
        if (!ensemble.is_active(k)) continue;
        const auto& theta = ensemble.params[k];
        for (std::size_t i = 0; i < data.size(); ++i) {
            for (std::size_t j = 0; j < data[i].size(); ++j) {
                const auto g = model.loss_gradient(data[i].x(j), data[i].y(j), theta);
                double sq = 0.0;
                for (double v : g) sq += v * v;
                est.grad_sq_bound = std::max(est.grad_sq_bound, sq);
            }
            const std::size_t probes = std::min(kProbesPerClient, data[i].size());
            for (std::size_t q = 0; q < probes; ++q) {
                std::uniform_int_distribution<std::size_t> pick(0, data[i].size() - 1);
                const std::size_t j = pick(rng);
                const auto g0 = model.loss_gradient(data[i].x(j), data[i].y(j), theta);
                ParamVector dir(P);
                double norm = 0.0;
                for (auto& v : dir) {
                    v = normal(rng);
                    norm += v * v;
                }
                norm = std::sqrt(norm);
                for (double r : radii) {
                    ParamVector moved = theta;
                    for (std::size_t p = 0; p < P; ++p) moved[p] += r * dir[p] / norm;
                    const auto g1 = model.loss_gradient(data[i].x(j), data[i].y(j), moved);
                    double diff = 0.0;
                    for (std::size_t p = 0; p < P; ++p) diff += (g1[p] - g0[p]) * (g1[p] - g0[p]);
                    est.smoothness = std::max(est.smoothness, std::sqrt(diff) / r);
                }
            }
        }
    }
    est.eta = theorem_step_size(est.smoothness, est.grad_sq_bound);
    return est;
}

}  // namespace fedrc
