#include "fedrc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedrc/error.hpp"
#include "fedrc/rng.hpp"
#include "scenario_detail.hpp"

namespace fedrc {

ConceptMap identity_concept(std::size_t num_classes) {
    ConceptMap m(num_classes);
    std::iota(m.begin(), m.end(), 0);
    return m;
}

ConceptMap reverse_concept(std::size_t num_classes) {
    ConceptMap m(num_classes);
    for (std::size_t y = 0; y < num_classes; ++y) m[y] = static_cast<int>(num_classes - 1 - y);
    return m;
}

ConceptMap shift_concept(std::size_t num_classes) {
    ConceptMap m(num_classes);
    for (std::size_t y = 0; y < num_classes; ++y) m[y] = static_cast<int>((y + 1) % num_classes);
    return m;
}

ConceptMap named_concept(const std::string& name, std::size_t num_classes) {
    if (name == "identity") return identity_concept(num_classes);
    if (name == "reverse") return reverse_concept(num_classes);
    if (name == "shift") return shift_concept(num_classes);
    throw ConfigError("unknown concept map '" + name + "' (expected identity, reverse or shift)");
}

bool is_permutation(const ConceptMap& map, std::size_t num_classes) {
    if (map.size() != num_classes) return false;
    std::vector<char> seen(num_classes, 0);
    for (int v : map) {
        if (v < 0 || static_cast<std::size_t>(v) >= num_classes || seen[static_cast<std::size_t>(v)]) return false;
        seen[static_cast<std::size_t>(v)] = 1;
    }
    return true;
}

ConceptMap invert(const ConceptMap& map) {
    ConceptMap inv(map.size());
    for (std::size_t y = 0; y < map.size(); ++y) inv[static_cast<std::size_t>(map[y])] = static_cast<int>(y);
    return inv;
}

void ScenarioConfig::finalize() {
    if (concept_maps.empty()) {
        concept_maps = {identity_concept(num_classes), reverse_concept(num_classes),
                        shift_concept(num_classes)};
    }
    if (concept_proportions.empty()) {
        concept_proportions.assign(concept_maps.size(), 1.0 / static_cast<double>(concept_maps.size()));
    }
    if (feature_shift_fraction.size() == 1 && concept_maps.size() > 1) {
        feature_shift_fraction.assign(concept_maps.size(), feature_shift_fraction.front());
    }
    validate();
}

void ScenarioConfig::validate() const {
    if (num_clients == 0) throw ConfigError("scenario.num_clients must be positive");
    if (input_dim == 0) throw ConfigError("scenario.input_dim must be positive");
    if (num_classes < 2) throw ConfigError("scenario.num_classes must be at least 2");
    if (min_samples < 2 || max_samples < min_samples) {
        throw ConfigError("scenario samples must satisfy 2 <= scenario.min_samples <= scenario.max_samples");
    }
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw ConfigError("scenario.test_fraction must be in [0, 1)");
    }
    if (!(dirichlet_alpha > 0.0)) throw ConfigError("scenario.dirichlet_alpha must be positive");
    if (!(noise_std >= 0.0) || !(class_separation > 0.0)) {
        throw ConfigError("scenario.noise_std must be >= 0 and scenario.class_separation > 0");
    }
    if (!(feature_style_strength >= 0.0)) throw ConfigError("scenario.style_strength must be >= 0");
    if (concept_maps.empty()) throw ConfigError("scenario needs at least one concept map");
    for (const auto& m : concept_maps) {
        if (!is_permutation(m, num_classes)) throw ConfigError("concept map is not a permutation of the classes");
    }
    if (concept_proportions.size() != concept_maps.size()) {
        throw ConfigError("scenario.concept_proportions must have one entry per concept");
    }
    double total = 0.0;
    for (double p : concept_proportions) {
        if (!(p >= 0.0)) throw ConfigError("concept proportions must be nonnegative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("scenario.concept_proportions must sum to 1");
    if (feature_shift_fraction.size() != concept_maps.size()) {
        throw ConfigError("scenario.feature_shift_fraction must have one entry or one per concept");
    }
    bool any_style = false;
    for (double f : feature_shift_fraction) {
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("feature shift fractions must be in [0, 1]");
        any_style = any_style || f > 0.0;
    }
    if (any_style && num_feature_styles == 0) {
        throw ConfigError("feature shift requested but scenario.num_styles is 0");
    }
    if (holdout_adapt_per_class == 0 || holdout_test_per_class == 0) {
        throw ConfigError("holdout sizes per class must be positive");
    }
}

void apply_preset(ScenarioConfig& config, const std::string& name) {
    if (name == "standard") {
        config.concept_maps.clear();
        config.concept_proportions.clear();
        config.feature_shift_fraction = {0.3};
        config.num_feature_styles = 5;
        config.dirichlet_alpha = 1.0;
        config.num_clients = 60;
        return;
    }
    if (name == "paper-mix") {
        config.concept_maps.clear();  // identity, reverse, shift at finalize()
        config.concept_proportions = {0.5, 0.25, 0.25};
        config.feature_shift_fraction = {0.4, 0.2, 0.2};
        return;
    }
    throw ConfigError("unknown preset '" + name + "' (expected standard or paper-mix)");
}

std::vector<Dataset> FederatedScenario::train_sets() const {
    std::vector<Dataset> out;
    out.reserve(participating.size());
    for (const auto& c : participating) out.push_back(c.train);
    return out;
}

namespace detail {

// Integer counts proportional to `weights` summing to `total` (largest remainder).
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
    std::vector<std::size_t> counts(weights.size(), 0);
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = weights[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        used += counts[i];
        rem.emplace_back(exact - static_cast<double>(counts[i]), i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; used < total && r < rem.size(); ++r, ++used) ++counts[rem[r].second];
    return counts;
}

std::vector<Style> make_styles(const ScenarioConfig& config, std::size_t dim) {
    std::vector<Style> styles(config.num_feature_styles + 1);
    // Style 0 is the identity.
    styles[0].a.assign(dim * dim, 0.0);
    for (std::size_t r = 0; r < dim; ++r) styles[0].a[r * dim + r] = 1.0;
    styles[0].b.assign(dim, 0.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double s = config.feature_style_strength;
    for (std::size_t id = 1; id < styles.size(); ++id) {
        Rng rng = make_rng(config.seed, "style", id);
        Style st = styles[0];
        for (auto& v : st.a) v += s * normal(rng) / std::sqrt(static_cast<double>(dim));
        for (auto& v : st.b) v = s * config.class_separation * normal(rng);
        styles[id] = std::move(st);
    }
    return styles;
}

std::vector<double> apply_style(const Style& st, std::span<const double> x) {
    const std::size_t d = x.size();
    std::vector<double> out(d);
    for (std::size_t r = 0; r < d; ++r) {
        double v = st.b[r];
        for (std::size_t c = 0; c < d; ++c) v += st.a[r * d + c] * x[c];
        out[r] = v;
    }
    return out;
}

// Concept and style of every participating client.
void assign_concepts(const ScenarioConfig& config, std::vector<int>& concept_of, std::vector<int>& style_of) {
    const std::size_t M = config.num_clients;
    const auto counts = apportion(M, config.concept_proportions);
    concept_of.clear();
    for (std::size_t c = 0; c < counts.size(); ++c) concept_of.insert(concept_of.end(), counts[c], static_cast<int>(c));
    Rng rng = make_rng(config.seed, "concept-assign");
    std::shuffle(concept_of.begin(), concept_of.end(), rng);

    style_of.assign(M, 0);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < M; ++i) {
            if (concept_of[i] == static_cast<int>(c)) members.push_back(i);
        }
        const auto styled = static_cast<std::size_t>(
            std::llround(config.feature_shift_fraction[c] * static_cast<double>(members.size())));
        Rng srng = make_rng(config.seed, "style-assign", c);
        std::shuffle(members.begin(), members.end(), srng);
        std::uniform_int_distribution<int> pick(1, static_cast<int>(std::max<std::size_t>(1, config.num_feature_styles)));
        for (std::size_t r = 0; r < std::min(styled, members.size()); ++r) style_of[members[r]] = pick(srng);
    }
}

std::size_t test_count(std::size_t n, double fraction) {
    if (fraction <= 0.0) return 0;
    auto t = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    t = std::max<std::size_t>(t, 1);
    return std::min(t, n - 1);
}

// Builds one client from latent (x, class) pairs in order.
ClientDataset build_client(std::size_t id, int concept_id, int style, const ConceptMap& map,
                           const Style& st, const std::vector<std::vector<double>>& xs,
                           const std::vector<int>& classes, double test_fraction) {
    const std::size_t dim = xs.empty() ? 0 : xs.front().size();
    ClientDataset c;
    c.id = id;
    c.concept_id = concept_id;
    c.style = style;
    c.train = Dataset(dim);
    c.test = Dataset(dim);
    const std::size_t n = xs.size();
    const std::size_t n_test = test_count(n, test_fraction);
    for (std::size_t j = 0; j < n; ++j) {
        const auto x = style == 0 ? xs[j] : apply_style(st, xs[j]);
        const int label = map[static_cast<std::size_t>(classes[j])];
        if (j < n - n_test) {
            c.train.add(x, label);
            c.train_class.push_back(classes[j]);
        } else {
            c.test.add(x, label);
            c.test_class.push_back(classes[j]);
        }
    }
    return c;
}

// Balanced holdout relabeled once per concept (same inputs for every concept).
void add_nonparticipating(FederatedScenario& sc, const std::vector<std::vector<double>>& adapt_x,
                          const std::vector<int>& adapt_y, const std::vector<std::vector<double>>& test_x,
                          const std::vector<int>& test_y, std::size_t first_id) {
    const std::size_t dim = sc.input_dim;
    for (std::size_t c = 0; c < sc.concept_maps.size(); ++c) {
        ClientDataset cl;
        cl.id = first_id + c;
        cl.concept_id = static_cast<int>(c);
        cl.style = 0;
        cl.train = Dataset(dim);
        cl.test = Dataset(dim);
        const auto& map = sc.concept_maps[c];
        for (std::size_t j = 0; j < adapt_x.size(); ++j) {
            cl.train.add(adapt_x[j], map[static_cast<std::size_t>(adapt_y[j])]);
            cl.train_class.push_back(adapt_y[j]);
        }
        for (std::size_t j = 0; j < test_x.size(); ++j) {
            cl.test.add(test_x[j], map[static_cast<std::size_t>(test_y[j])]);
            cl.test_class.push_back(test_y[j]);
        }
        sc.nonparticipating.push_back(std::move(cl));
    }
}

}  // namespace detail

FederatedScenario generate(const ScenarioConfig& cfg_in) {
    ScenarioConfig config = cfg_in;
    config.finalize();
    const std::size_t d = config.input_dim;
    const std::size_t C = config.num_classes;

    FederatedScenario sc;
    sc.input_dim = d;
    sc.num_classes = C;
    sc.num_styles = config.num_feature_styles;
    sc.concept_maps = config.concept_maps;
    sc.concept_proportions = config.concept_proportions;
    sc.feature_shift_fraction = config.feature_shift_fraction;

    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> centers(C, std::vector<double>(d));
    {
        Rng rng = make_rng(config.seed, "centers");
        for (auto& c : centers) {
            for (auto& v : c) v = config.class_separation * normal(rng);
        }
    }
    auto draw = [&](int cls, Rng& rng) {
        std::vector<double> x(d);
        for (std::size_t r = 0; r < d; ++r) {
            x[r] = centers[static_cast<std::size_t>(cls)][r] + config.noise_std * normal(rng);
        }
        return x;
    };

    const auto styles = detail::make_styles(config, d);
    std::vector<int> concept_of, style_of;
    detail::assign_concepts(config, concept_of, style_of);

    const std::vector<double> alpha(C, config.dirichlet_alpha);
    for (std::size_t i = 0; i < config.num_clients; ++i) {
        Rng rng = make_rng(config.seed, "client", i);
        std::uniform_int_distribution<std::size_t> size_dist(config.min_samples, config.max_samples);
        const std::size_t n = size_dist(rng);
        const auto p = sample_dirichlet(alpha, rng);
        std::discrete_distribution<int> pick_class(p.begin(), p.end());
        std::vector<std::vector<double>> xs;
        std::vector<int> classes;
        for (std::size_t j = 0; j < n; ++j) {
            const int cls = pick_class(rng);
            classes.push_back(cls);
            xs.push_back(draw(cls, rng));
        }
        const int c = concept_of[i];
        sc.participating.push_back(detail::build_client(
            i, c, style_of[i], config.concept_maps[static_cast<std::size_t>(c)],
            styles[static_cast<std::size_t>(style_of[i])], xs, classes, config.test_fraction));
    }

    Rng hrng = make_rng(config.seed, "holdout");
    std::vector<std::vector<double>> ax, tx;
    std::vector<int> ay, ty;
    for (std::size_t r = 0; r < config.holdout_adapt_per_class; ++r) {
        for (std::size_t cls = 0; cls < C; ++cls) {
            ax.push_back(draw(static_cast<int>(cls), hrng));
            ay.push_back(static_cast<int>(cls));
        }
    }
    for (std::size_t r = 0; r < config.holdout_test_per_class; ++r) {
        for (std::size_t cls = 0; cls < C; ++cls) {
            tx.push_back(draw(static_cast<int>(cls), hrng));
            ty.push_back(static_cast<int>(cls));
        }
    }
    detail::add_nonparticipating(sc, ax, ay, tx, ty, config.num_clients);
    return sc;
}

}  // namespace fedrc
