#include "config.hpp"

#include <cctype>
#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fedrc/error.hpp"

namespace fedrc::app {
namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    const std::string v = trim(text);
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError("invalid value '" + text + "' for " + key);
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const std::string v = trim(text);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("invalid boolean '" + text + "' for " + key);
}

std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split(text, ',')) out.push_back(parse_number<double>(key, item));
    return out;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        std::ostringstream o;
        o.precision(17);
        o << v[i];
        s += o.str();
    }
    return s;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

#define FEDRC_SIZE(field) [](ExperimentConfig& c, const std::string& k, const std::string& v) { field = parse_number<std::size_t>(k, v); }
#define FEDRC_DOUBLE(field) [](ExperimentConfig& c, const std::string& k, const std::string& v) { field = parse_number<double>(k, v); }
#define FEDRC_BOOL(field) [](ExperimentConfig& c, const std::string& k, const std::string& v) { field = parse_bool(k, v); }

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.seed = parse_number<std::uint64_t>(k, v);
         }},
        {"algorithm", [](ExperimentConfig& c, const std::string&, const std::string& v) {
             c.algorithm = parse_baseline(trim(v));
         }},
        {"output_dir", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = trim(v); }},
        {"workers", FEDRC_SIZE(c.fed.workers)},

        {"scenario.preset", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.preset = trim(v); }},
        {"scenario.path", [](ExperimentConfig& c, const std::string&, const std::string& v) {
             c.source.kind = ScenarioSource::Kind::directory;
             c.source.path = trim(v);
         }},
        {"scenario.tabular", [](ExperimentConfig& c, const std::string&, const std::string& v) {
             c.source.kind = ScenarioSource::Kind::tabular;
             c.source.path = trim(v);
         }},
        {"scenario.tabular_label", [](ExperimentConfig& c, const std::string&, const std::string& v) {
             c.source.schema.label_column = trim(v);
         }},
        {"scenario.tabular_delimiter", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             const std::string d = v == "\\t" ? "\t" : v;
             if (d.size() != 1) throw ConfigError(k + " must be a single character");
             c.source.schema.delimiter = d[0];
         }},
        {"scenario.tabular_header", FEDRC_BOOL(c.source.schema.has_header)},
        {"scenario.num_clients", FEDRC_SIZE(c.scenario.num_clients)},
        {"scenario.min_samples", FEDRC_SIZE(c.scenario.min_samples)},
        {"scenario.max_samples", FEDRC_SIZE(c.scenario.max_samples)},
        {"scenario.test_fraction", FEDRC_DOUBLE(c.scenario.test_fraction)},
        {"scenario.input_dim", FEDRC_SIZE(c.scenario.input_dim)},
        {"scenario.num_classes", FEDRC_SIZE(c.scenario.num_classes)},
        {"scenario.dirichlet_alpha", FEDRC_DOUBLE(c.scenario.dirichlet_alpha)},
        {"scenario.class_separation", FEDRC_DOUBLE(c.scenario.class_separation)},
        {"scenario.noise_std", FEDRC_DOUBLE(c.scenario.noise_std)},
        {"scenario.num_styles", FEDRC_SIZE(c.scenario.num_feature_styles)},
        {"scenario.style_strength", FEDRC_DOUBLE(c.scenario.feature_style_strength)},
        {"scenario.concept_proportions", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.scenario.concept_proportions = parse_doubles(k, v);
         }},
        {"scenario.feature_shift_fraction", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.scenario.feature_shift_fraction = parse_doubles(k, v);
         }},
        {"scenario.holdout_adapt_per_class", FEDRC_SIZE(c.scenario.holdout_adapt_per_class)},
        {"scenario.holdout_test_per_class", FEDRC_SIZE(c.scenario.holdout_test_per_class)},

        {"model.architecture", [](ExperimentConfig& c, const std::string&, const std::string& v) {
             c.model.architecture = parse_architecture(trim(v));
         }},
        {"model.hidden", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.model.hidden.clear();
             for (const auto& item : split(v, ',')) c.model.hidden.push_back(parse_number<std::size_t>(k, item));
         }},
        {"model.shared_trunk", FEDRC_BOOL(c.model.shared_trunk)},

        {"fed.rounds", FEDRC_SIZE(c.fed.rounds)},
        {"fed.clusters", FEDRC_SIZE(c.fed.clusters)},
        {"fed.local_steps", FEDRC_SIZE(c.fed.local_steps)},
        {"fed.local_epochs", FEDRC_SIZE(c.fed.local_epochs)},
        {"fed.batch_size", FEDRC_SIZE(c.fed.batch_size)},
        {"fed.eta_local", FEDRC_DOUBLE(c.fed.eta_local)},
        {"fed.eta_global", FEDRC_DOUBLE(c.fed.eta_global)},
        {"fed.participation", FEDRC_DOUBLE(c.fed.participation)},
        {"fed.removal", FEDRC_BOOL(c.fed.removal_enabled)},
        {"fed.removal_threshold", FEDRC_DOUBLE(c.fed.removal_threshold)},
        {"fed.removal_warmup", FEDRC_SIZE(c.fed.removal_warmup)},
        {"fed.convergence_tol", FEDRC_DOUBLE(c.fed.convergence_tol)},
        {"fed.noise_sigma", FEDRC_DOUBLE(c.fed.noise_sigma)},
        {"fed.new_client_estep_cap", FEDRC_SIZE(c.fed.new_client_estep_cap)},
        {"fed.new_client_tol", FEDRC_DOUBLE(c.fed.new_client_tol)},

        {"rc.eta", FEDRC_DOUBLE(c.rc.eta)},
        {"rc.eps_floor", FEDRC_DOUBLE(c.rc.eps_floor)},
        {"rc.adam", FEDRC_BOOL(c.rc.adam_enabled)},
        {"rc.adam_alpha", FEDRC_DOUBLE(c.rc.adam_alpha)},
        {"rc.adam_beta1", FEDRC_DOUBLE(c.rc.adam_beta1)},
        {"rc.adam_beta2", FEDRC_DOUBLE(c.rc.adam_beta2)},
        {"rc.adam_eps", FEDRC_DOUBLE(c.rc.adam_eps)},
    };
    return table;
}

#undef FEDRC_SIZE
#undef FEDRC_DOUBLE
#undef FEDRC_BOOL

// Flat key -> value list; INI sections become "section.key".
using Entries = std::vector<std::pair<std::string, std::string>>;

Entries flatten(const pt::ptree& tree) {
    Entries out;
    for (const auto& [name, child] : tree) {
        if (child.empty()) {
            out.emplace_back(name, child.data());
            continue;
        }
        for (const auto& [key, leaf] : child) {
            if (!leaf.empty()) throw ConfigError("nested section under [" + name + "] is not supported");
            out.emplace_back(name + "." + key, leaf.data());
        }
    }
    return out;
}

struct Layer {
    Entries entries;
    std::string concept_maps;  // raw, resolved after all layers
    bool has_concept_maps = false;
};

void apply(ExperimentConfig& c, Layer& layer, std::map<std::string, bool>& seen) {
    for (const auto& [key, value] : layer.entries) {
        if (key == "scenario.concept_maps") {
            layer.concept_maps = value;
            layer.has_concept_maps = true;
            seen[key] = true;
            continue;
        }
        const auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
        it->second(c, key, value);
        seen[key] = true;
    }
}

// Comma-separated names (identity, reverse, shift) or explicit permutations
// written as space-separated labels.
std::vector<ConceptMap> parse_concept_maps(const std::string& text, std::size_t num_classes) {
    std::vector<ConceptMap> maps;
    for (const auto& item : split(text, ',')) {
        if (item.find(' ') == std::string::npos && !std::isdigit(static_cast<unsigned char>(item[0]))) {
            maps.push_back(named_concept(item, num_classes));
            continue;
        }
        ConceptMap m;
        for (const auto& label : split(item, ' ')) m.push_back(parse_number<int>("scenario.concept_maps", label));
        maps.push_back(std::move(m));
    }
    return maps;
}

}  // namespace

ExperimentConfig load_config(const ConfigRequest& request) {
    ExperimentConfig c;
    std::map<std::string, bool> seen;

    Layer file;
    if (request.file) {
        pt::ptree tree;
        try {
            pt::read_ini(request.file->string(), tree);
        } catch (const pt::ini_parser_error& e) {
            if (e.line() == 0) throw IoError("cannot read config " + request.file->string() + ": " + e.message());
            throw ConfigError("config " + request.file->string() + " line " + std::to_string(e.line()) +
                              ": " + e.message());
        }
        file.entries = flatten(tree);
    }
    apply(c, file, seen);

    if (!request.preset.empty()) c.preset = request.preset;
    if (!c.preset.empty()) apply_preset(c.scenario, c.preset);

    Layer cli;
    for (const auto& kv : request.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cli.entries.emplace_back(trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }
    apply(c, cli, seen);

    // Both presets reset the concept maps, so the file's list only survives without one.
    if (cli.has_concept_maps) {
        c.scenario.concept_maps = parse_concept_maps(cli.concept_maps, c.scenario.num_classes);
    } else if (file.has_concept_maps && c.preset.empty()) {
        c.scenario.concept_maps = parse_concept_maps(file.concept_maps, c.scenario.num_classes);
    }

    if (!seen.count("seed")) throw ConfigError("missing required field 'seed'");
    if (request.need_algorithm && !c.algorithm) throw ConfigError("missing required field 'algorithm'");
    if (request.need_output_dir && c.output_dir.empty()) {
        throw ConfigError("missing required field 'output_dir' (or pass --out)");
    }

    c.scenario.seed = c.seed;
    c.fed.seed = c.seed;
    if (c.source.kind == ScenarioSource::Kind::generate) c.scenario.finalize();
    c.fed.validate();
    c.rc.validate();
    return c;
}

std::string to_ini(const ExperimentConfig& c) {
    std::ostringstream o;
    o.precision(17);
    o << "seed = " << c.seed << '\n';
    if (c.algorithm) o << "algorithm = " << to_string(*c.algorithm) << '\n';
    o << "\n[scenario]\n";
    switch (c.source.kind) {
        case ScenarioSource::Kind::directory: o << "path = " << c.source.path.string() << '\n'; break;
        case ScenarioSource::Kind::tabular:
            o << "tabular = " << c.source.path.string() << '\n'
              << "tabular_label = " << c.source.schema.label_column << '\n'
              << "tabular_header = " << (c.source.schema.has_header ? "true" : "false") << '\n';
            break;
        case ScenarioSource::Kind::generate: break;
    }
    const auto& s = c.scenario;
    o << "num_clients = " << s.num_clients << '\n'
      << "min_samples = " << s.min_samples << '\n'
      << "max_samples = " << s.max_samples << '\n'
      << "test_fraction = " << s.test_fraction << '\n'
      << "input_dim = " << s.input_dim << '\n'
      << "num_classes = " << s.num_classes << '\n'
      << "dirichlet_alpha = " << s.dirichlet_alpha << '\n'
      << "class_separation = " << s.class_separation << '\n'
      << "noise_std = " << s.noise_std << '\n'
      << "num_styles = " << s.num_feature_styles << '\n'
      << "style_strength = " << s.feature_style_strength << '\n';
    o << "concept_maps = ";
    for (std::size_t m = 0; m < s.concept_maps.size(); ++m) {
        if (m) o << ", ";
        for (std::size_t y = 0; y < s.concept_maps[m].size(); ++y) o << (y ? " " : "") << s.concept_maps[m][y];
    }
    o << '\n'
      << "concept_proportions = " << join(s.concept_proportions) << '\n'
      << "feature_shift_fraction = " << join(s.feature_shift_fraction) << '\n'
      << "holdout_adapt_per_class = " << s.holdout_adapt_per_class << '\n'
      << "holdout_test_per_class = " << s.holdout_test_per_class << '\n';
    o << "\n[model]\narchitecture = " << to_string(c.model.architecture) << '\n';
    if (!c.model.hidden.empty()) {
        o << "hidden = ";
        for (std::size_t i = 0; i < c.model.hidden.size(); ++i) o << (i ? "," : "") << c.model.hidden[i];
        o << '\n';
    }
    o << "shared_trunk = " << (c.model.shared_trunk ? "true" : "false") << '\n';
    const auto& f = c.fed;
    o << "\n[fed]\n"
      << "rounds = " << f.rounds << '\n'
      << "clusters = " << f.clusters << '\n'
      << "local_steps = " << f.local_steps << '\n'
      << "local_epochs = " << f.local_epochs << '\n'
      << "batch_size = " << f.batch_size << '\n'
      << "eta_local = " << f.eta_local << '\n'
      << "eta_global = " << f.eta_global << '\n'
      << "participation = " << f.participation << '\n'
      << "removal = " << (f.removal_enabled ? "true" : "false") << '\n'
      << "removal_threshold = " << f.removal_threshold << '\n'
      << "removal_warmup = " << f.removal_warmup << '\n'
      << "convergence_tol = " << f.convergence_tol << '\n'
      << "noise_sigma = " << f.noise_sigma << '\n'
      << "new_client_estep_cap = " << f.new_client_estep_cap << '\n'
      << "new_client_tol = " << f.new_client_tol << '\n';
    const auto& r = c.rc;
    o << "\n[rc]\n"
      << "eta = " << r.eta << '\n'
      << "eps_floor = " << r.eps_floor << '\n'
      << "adam = " << (r.adam_enabled ? "true" : "false") << '\n'
      << "adam_alpha = " << r.adam_alpha << '\n'
      << "adam_beta1 = " << r.adam_beta1 << '\n'
      << "adam_beta2 = " << r.adam_beta2 << '\n'
      << "adam_eps = " << r.adam_eps << '\n';
    return o.str();
}

FederatedScenario build_scenario(const ExperimentConfig& c) {
    switch (c.source.kind) {
        case ScenarioSource::Kind::directory: return read_scenario(c.source.path);
        case ScenarioSource::Kind::tabular: {
            ScenarioConfig sc = c.scenario;
            return load_tabular(c.source.path, c.source.schema, sc);
        }
        case ScenarioSource::Kind::generate: break;
    }
    return generate(c.scenario);
}

}  // namespace fedrc::app
