#include "run_state.hpp"

#include <fstream>

#include <json.hpp>

#include "fedrc/error.hpp"

namespace fedrc::app {
namespace {

using nlohmann::json;

template <class T>
T field(const json& j, const char* key) {
    if (!j.contains(key)) throw IoError(std::string("run state is missing '") + key + "'");
    return j.at(key).get<T>();
}

}  // namespace

void write_run_state(const RunState& s, const std::filesystem::path& file) {
    json j;
    j["format"] = "fedrc-run-state";
    j["version"] = 1;
    j["algorithm"] = to_string(s.algorithm);
    j["rounds"] = s.rounds;
    j["new_client_estep_cap"] = s.fed.new_client_estep_cap;
    j["new_client_tol"] = s.fed.new_client_tol;
    const auto& m = s.ensemble.spec;
    j["model"] = {{"architecture", to_string(m.architecture)},
                  {"hidden", m.hidden},
                  {"input_dim", m.input_dim},
                  {"num_classes", m.num_classes},
                  {"shared_trunk", m.shared_trunk}};
    j["active"] = s.ensemble.active;
    j["params"] = s.ensemble.params;
    j["stats"] = {{"num_classes", s.stats.num_classes},
                  {"label_mass", s.stats.label_mass},
                  {"total_mass", s.stats.total_mass},
                  {"noise_sigma", s.stats.noise_sigma},
                  {"eps_floor", s.stats.eps_floor},
                  {"floored", s.stats.floored}};
    json clients = json::array();
    for (const auto& c : s.assignment.clients) {
        json e = {{"gamma", c.gamma}, {"omega", c.omega}};
        if (!c.adam_nu.empty()) {
            e["adam_nu"] = c.adam_nu;
            e["adam_a"] = c.adam_a;
        }
        clients.push_back(std::move(e));
    }
    j["clients"] = std::move(clients);

    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot write " + file.string());
    out << j.dump() << '\n';
    if (!out) throw IoError("failed writing " + file.string());
}

RunState read_run_state(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed run state " + file.string() + ": " + e.what());
    }
    try {
        if (field<std::string>(j, "format") != "fedrc-run-state") throw IoError("not a run state file");
        RunState s;
        s.algorithm = parse_baseline(field<std::string>(j, "algorithm"));
        s.rounds = field<std::size_t>(j, "rounds");
        s.fed.new_client_estep_cap = field<std::size_t>(j, "new_client_estep_cap");
        s.fed.new_client_tol = field<double>(j, "new_client_tol");
        const json& m = j.at("model");
        s.ensemble.spec.architecture = parse_architecture(field<std::string>(m, "architecture"));
        s.ensemble.spec.hidden = field<std::vector<std::size_t>>(m, "hidden");
        s.ensemble.spec.input_dim = field<std::size_t>(m, "input_dim");
        s.ensemble.spec.num_classes = field<std::size_t>(m, "num_classes");
        s.ensemble.spec.shared_trunk = field<bool>(m, "shared_trunk");
        s.ensemble.active = field<std::vector<std::uint8_t>>(j, "active");
        s.ensemble.params = field<std::vector<ParamVector>>(j, "params");
        const std::size_t K = s.ensemble.params.size();
        const json& st = j.at("stats");
        s.stats.num_clusters = K;
        s.stats.num_classes = field<std::size_t>(st, "num_classes");
        s.stats.label_mass = field<std::vector<double>>(st, "label_mass");
        s.stats.total_mass = field<std::vector<double>>(st, "total_mass");
        s.stats.noise_sigma = field<double>(st, "noise_sigma");
        s.stats.eps_floor = field<double>(st, "eps_floor");
        s.stats.floored = field<std::size_t>(st, "floored");
        s.assignment.num_clusters = K;
        for (const auto& e : j.at("clients")) {
            ClientAssignment c;
            c.num_clusters = K;
            c.gamma = field<std::vector<double>>(e, "gamma");
            c.omega = field<std::vector<double>>(e, "omega");
            if (e.contains("adam_nu")) {
                c.adam_nu = field<std::vector<double>>(e, "adam_nu");
                c.adam_a = field<std::vector<double>>(e, "adam_a");
            }
            if (c.omega.size() != K || (K && c.gamma.size() % K != 0)) throw IoError("run state has inconsistent shapes");
            s.assignment.clients.push_back(std::move(c));
        }
        if (s.ensemble.active.size() != K || s.stats.total_mass.size() != K ||
            s.stats.label_mass.size() != K * s.stats.num_classes) {
            throw IoError("run state has inconsistent shapes");
        }
        return s;
    } catch (const json::exception& e) {
        throw IoError("malformed run state " + file.string() + ": " + e.what());
    }
}

}  // namespace fedrc::app
