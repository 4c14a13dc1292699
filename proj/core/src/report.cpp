#include <iomanip>
#include <limits>

#include <json.hpp>

#include "fedrc/error.hpp"
#include "fedrc/metrics.hpp"

namespace fedrc {
namespace {

using nlohmann::json;

json report_json(const RoundReport& r) {
    json j;
    j["round"] = r.round;
    j["objective"] = r.objective;
    j["train_acc"] = r.train_acc;
    j["local_acc"] = r.local_acc;
    j["global_acc"] = r.global_acc;
    j["global_acc_hard"] = r.global_acc_hard;
    j["active_clusters"] = r.active_clusters;
    j["gamma_change"] = r.gamma_change;
    j["concept_purity"] = r.concept_purity;
    j["uniform_fallbacks"] = r.uniform_fallbacks;
    j["cluster_mass"] = r.cluster_mass;
    j["removed"] = r.removed;
    return j;
}

json table_json(const CompositionTable& t) {
    json j;
    j["mode"] = t.mode == CompositionMode::soft ? "soft" : "hard";
    j["values"] = t.values;
    json mass = json::array();
    json share = json::array();
    for (std::size_t v = 0; v < t.values.size(); ++v) {
        json m = json::array();
        json s = json::array();
        for (std::size_t k = 0; k < t.num_clusters; ++k) {
            m.push_back(t.at(v, k));
            s.push_back(t.share(v, k));
        }
        mass.push_back(std::move(m));
        share.push_back(std::move(s));
    }
    j["mass"] = std::move(mass);
    j["share"] = std::move(share);
    return j;
}

}  // namespace

std::string rounds_csv_header(std::size_t clusters) {
    std::string h =
        "round,objective,train_acc,local_acc,global_acc,global_acc_hard,active_clusters,"
        "gamma_change,concept_purity,uniform_fallbacks";
    for (std::size_t k = 0; k < clusters; ++k) h += ",mass_" + std::to_string(k);
    return h;
}

void write_rounds_csv(std::ostream& out, std::span<const RoundReport> reports, std::size_t clusters) {
    out << rounds_csv_header(clusters) << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : reports) {
        if (r.cluster_mass.size() != clusters) throw ConfigError("round report has wrong cluster count");
        out << r.round << ',' << r.objective << ',' << r.train_acc << ',' << r.local_acc << ','
            << r.global_acc << ',' << r.global_acc_hard << ',' << r.active_clusters << ','
            << r.gamma_change << ',' << r.concept_purity << ',' << r.uniform_fallbacks;
        for (double m : r.cluster_mass) out << ',' << m;
        out << '\n';
    }
    if (!out) throw IoError("failed to write rounds table");
}

std::size_t best_train_round(std::span<const RoundReport> reports) {
    if (reports.empty()) throw ConfigError("no rounds to select from");
    std::size_t best = 0;
    for (std::size_t i = 1; i < reports.size(); ++i) {
        if (reports[i].train_acc > reports[best].train_acc) best = i;
    }
    return best;
}

void write_composition_csv(std::ostream& out, const CompositionTable& t) {
    out << to_string(t.attribute);
    for (std::size_t k = 0; k < t.num_clusters; ++k) out << ",mass_" << k;
    for (std::size_t k = 0; k < t.num_clusters; ++k) out << ",share_" << k;
    out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t v = 0; v < t.values.size(); ++v) {
        out << t.values[v];
        for (std::size_t k = 0; k < t.num_clusters; ++k) out << ',' << t.at(v, k);
        for (std::size_t k = 0; k < t.num_clusters; ++k) out << ',' << t.share(v, k);
        out << '\n';
    }
    if (!out) throw IoError("failed to write composition table");
}

void write_summary_json(std::ostream& out, const RunSummary& s) {
    json j;
    j["algorithm"] = s.algorithm;
    j["clusters"] = s.clusters;
    j["seed"] = s.seed;
    j["rounds_run"] = s.rounds.empty() ? 0 : s.rounds.back().round;
    if (!s.rounds.empty()) {
        const std::size_t best = best_train_round(s.rounds);
        j["selected_round"] = report_json(s.rounds[best]);
        j["final"] = report_json(s.rounds.back());
        j["active_clusters"] = s.rounds.back().active_clusters;
    }
    j["concept_purity"] = s.purity.weighted;
    j["purity_per_cluster"] = s.purity.per_cluster;
    j["gamma_converged_round"] = s.gamma_converged_round ? json(*s.gamma_converged_round) : json(nullptr);
    j["removed_clusters"] = s.removed_clusters;
    json comp = json::object();
    for (const auto& t : s.composition) comp[to_string(t.attribute)] = table_json(t);
    j["composition"] = std::move(comp);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed to write summary");
}

}  // namespace fedrc
