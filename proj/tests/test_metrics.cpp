#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fedrc/error.hpp"
#include "fedrc/metrics.hpp"
#include "support.hpp"

using namespace fedrc;

namespace {

// Three clients, one per concept, four samples each; client c has style c.
FederatedScenario tiny_scenario() {
    FederatedScenario s;
    s.input_dim = 1;
    s.num_classes = 2;
    s.num_styles = 2;
    s.concept_maps = {identity_concept(2), reverse_concept(2), shift_concept(2)};
    s.concept_proportions = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    s.feature_shift_fraction = {0.0};
    for (int c = 0; c < 3; ++c) {
        ClientDataset cd;
        cd.id = std::size_t(c);
        cd.concept_id = c;
        cd.style = c;
        cd.train = Dataset(1);
        cd.test = Dataset(1);
        for (int j = 0; j < 4; ++j) {
            const int cls = (j + c) % 2;
            cd.train.add(std::vector<double>{double(j)}, s.concept_maps[std::size_t(c)][std::size_t(cls)]);
            cd.train_class.push_back(cls);
        }
        s.participating.push_back(cd);
    }
    return s;
}

AssignmentState state_from(const FederatedScenario& s, std::size_t K,
                           const std::function<std::vector<double>(std::size_t, std::size_t)>& row) {
    AssignmentState st;
    st.num_clusters = K;
    for (std::size_t i = 0; i < s.participating.size(); ++i) {
        ClientAssignment c;
        c.num_clusters = K;
        for (std::size_t j = 0; j < s.participating[i].train.size(); ++j) {
            const auto r = row(i, j);
            c.gamma.insert(c.gamma.end(), r.begin(), r.end());
        }
        c.omega.resize(K);
        recompute_omega(c);
        st.clients.push_back(c);
    }
    return st;
}

ParamVector sure_of(const Model& m, int label) {
    ParamVector p(m.num_params(), 0.0);
    p[m.spec().input_dim * m.spec().num_classes + std::size_t(label)] = 2000.0;
    return p;
}

}  // namespace

TEST_CASE("attribute names") {
    for (auto a : {Attribute::class_label, Attribute::style, Attribute::concept_id}) CHECK(parse_attribute(to_string(a)) == a);
    CHECK(to_string(Attribute::class_label) == "class");
    CHECK_THROWS_AS(parse_attribute("color"), ConfigError);
}

TEST_CASE("uniform weights spread every value evenly") {
    const auto s = tiny_scenario();
    const auto st = state_from(s, 4, [](auto, auto) { return std::vector<double>(4, 0.25); });
    for (auto a : {Attribute::class_label, Attribute::style, Attribute::concept_id}) {
        const auto t = composition(st, s, a);
        for (std::size_t v = 0; v < t.values.size(); ++v) {
            double sum = 0.0;
            for (std::size_t k = 0; k < 4; ++k) {
                if (t.row_mass(v) > 0) CHECK(t.share(v, k) == doctest::Approx(0.25));
                sum += t.share(v, k);
            }
            if (t.row_mass(v) > 0) CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
    const auto t = composition(st, s, Attribute::style);
    CHECK(t.values == std::vector<int>{0, 1, 2});
}

TEST_CASE("one-hot weights by concept give a permutation matrix") {
    const auto s = tiny_scenario();
    const std::vector<std::size_t> cluster_of{2, 0, 1};
    const auto st = state_from(s, 3, [&](std::size_t i, auto) {
        std::vector<double> r(3, 0.0);
        r[cluster_of[i]] = 1.0;
        return r;
    });
    const auto t = composition(st, s, Attribute::concept_id);
    for (std::size_t v = 0; v < 3; ++v)
        for (std::size_t k = 0; k < 3; ++k) CHECK(t.share(v, k) == (k == cluster_of[v] ? 1.0 : 0.0));
    const auto p = concept_purity(st, s, std::vector<std::uint8_t>{1, 1, 1});
    CHECK(p.weighted == 1.0);
}

TEST_CASE("composition equals a direct tally") {
    const auto s = tiny_scenario();
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto st = state_from(s, 2, [&](auto, auto) {
        const double a = u(rng);
        return std::vector<double>{a, 1.0 - a};
    });
    for (auto mode : {CompositionMode::soft, CompositionMode::hard}) {
        const auto t = composition(st, s, Attribute::class_label, mode);
        std::map<std::pair<int, std::size_t>, double> tally;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                const auto r = st.clients[i].row(j);
                const int cls = s.participating[i].train_class[j];
                if (mode == CompositionMode::soft) {
                    tally[{cls, 0}] += r[0];
                    tally[{cls, 1}] += r[1];
                } else {
                    tally[{cls, r[1] > r[0] ? 1u : 0u}] += 1.0;
                }
            }
        for (std::size_t v = 0; v < 2; ++v)
            for (std::size_t k = 0; k < 2; ++k) CHECK(t.at(v, k) == doctest::Approx(tally[{int(v), k}]).epsilon(1e-14));
    }
}

TEST_CASE("purity of uniform weights over equal concepts is one third") {
    const auto s = tiny_scenario();
    const auto st = state_from(s, 2, [](auto, auto) { return std::vector<double>{0.5, 0.5}; });
    const auto p = concept_purity(st, s, std::vector<std::uint8_t>{1, 1});
    CHECK(p.weighted == doctest::Approx(1.0 / 3));
    for (double v : p.per_cluster) CHECK(v == doctest::Approx(1.0 / 3));
}

TEST_CASE("purity follows from the concept table alone") {
    const auto s = generate(testing::small_scenario(4));
    Rng rng(4);
    std::gamma_distribution<double> g(0.3, 1.0);
    const auto st = state_from(s, 3, [&](auto, auto) {
        std::vector<double> r{g(rng) + 1e-9, g(rng) + 1e-9, g(rng) + 1e-9};
        const double z = r[0] + r[1] + r[2];
        for (auto& v : r) v /= z;
        return r;
    });
    const std::vector<std::uint8_t> active{1, 1, 1};
    const auto direct = concept_purity(st, s, active);
    const auto table = composition(st, s, Attribute::concept_id);
    const auto from_table = purity_from_table(table, active);
    CHECK(std::abs(direct.weighted - from_table.weighted) < 1e-12);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        double best = 0.0, mk = 0.0;
        for (std::size_t v = 0; v < table.values.size(); ++v) {
            best = std::max(best, table.at(v, k));
            mk += table.at(v, k);
        }
        CHECK(std::abs(direct.per_cluster[k] - best / mk) < 1e-12);
        num += best;
        den += mk;
    }
    CHECK(std::abs(direct.weighted - num / den) < 1e-12);
    CHECK(direct.weighted >= 0.0);
    CHECK(direct.weighted <= 1.0);
}

TEST_CASE("accuracy equals a hand tally") {
    Model m(testing::linear_spec(1, 3));
    ClusterEnsemble ens;
    ens.spec = m.spec();
    ens.params = {sure_of(m, 1), sure_of(m, 2)};
    ens.active = {1, 1};
    Dataset d(1);
    for (int y : {1, 1, 2, 0, 1}) d.add(std::vector<double>{0.0}, y);
    CHECK(accuracy(m, ens, d, std::vector<double>{0.7, 0.3}, PredictionMode::soft) == doctest::Approx(3.0 / 5));
    CHECK(accuracy(m, ens, d, std::vector<double>{0.3, 0.7}, PredictionMode::hard) == doctest::Approx(1.0 / 5));
    CHECK(accuracy(m, ens, d, std::vector<double>{0.3, 0.7}, PredictionMode::soft) == doctest::Approx(1.0 / 5));
}

TEST_CASE("single cluster and duplicated clusters predict alike") {
    Rng rng(5);
    Model m(testing::mlp_spec(3, {4}, 4));
    const auto d = testing::random_dataset(50, 3, 4, rng);
    auto one = testing::random_ensemble(m, 1, rng);
    const double solo = accuracy(m, one, d, std::vector<double>{1.0}, PredictionMode::soft);
    CHECK(solo == accuracy(m, one, d, std::vector<double>{1.0}, PredictionMode::hard));
    auto two = one;
    two.params.push_back(one.params[0]);
    two.active = {1, 1};
    CHECK(accuracy(m, two, d, std::vector<double>{0.4, 0.6}, PredictionMode::soft) == solo);
    CHECK(accuracy(m, two, d, std::vector<double>{0.4, 0.6}, PredictionMode::hard) == solo);
}

TEST_CASE("evaluating accuracy leaves the ensemble untouched") {
    Rng rng(6);
    Model m(testing::linear_spec(3, 3));
    const auto d = testing::random_dataset(20, 3, 3, rng);
    const auto ens = testing::random_ensemble(m, 2, rng);
    const auto copy = ens;
    accuracy(m, ens, d, std::vector<double>{0.5, 0.5}, PredictionMode::soft);
    accuracy(m, ens, d, std::vector<double>{0.5, 0.5}, PredictionMode::hard);
    CHECK(ens == copy);
}

TEST_CASE("best train round takes the earliest maximum") {
    std::vector<RoundReport> r(5);
    const double acc[] = {0.2, 0.7, 0.9, 0.9, 0.5};
    for (std::size_t t = 0; t < 5; ++t) {
        r[t].round = t;
        r[t].train_acc = acc[t];
    }
    CHECK(best_train_round(r) == 2);
}

TEST_CASE("rounds csv layout") {
    CHECK(rounds_csv_header(2) ==
          "round,objective,train_acc,local_acc,global_acc,global_acc_hard,active_clusters,gamma_change,"
          "concept_purity,uniform_fallbacks,mass_0,mass_1");
    RoundReport r;
    r.round = 3;
    r.objective = 0.1;
    r.active_clusters = 2;
    r.cluster_mass = {0.25, 0.75};
    std::ostringstream out;
    write_rounds_csv(out, std::span<const RoundReport>(&r, 1), 2);
    std::istringstream in(out.str());
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == rounds_csv_header(2));
    CHECK(row.rfind("3,0.10000000000000001,", 0) == 0);
    CHECK(row.substr(row.size() - 9) == "0.25,0.75");
}

TEST_CASE("composition csv and summary json") {
    const auto s = tiny_scenario();
    const auto st = state_from(s, 2, [](std::size_t i, auto) {
        return i == 0 ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0};
    });
    const auto t = composition(st, s, Attribute::concept_id);
    std::ostringstream csv;
    write_composition_csv(csv, t);
    CHECK(csv.str().rfind("concept,mass_0,mass_1,share_0,share_1\n0,4,0,1,0\n", 0) == 0);

    RunSummary sum;
    sum.algorithm = "fedrc";
    sum.clusters = 2;
    sum.seed = 9;
    sum.rounds.resize(3);
    sum.rounds[1].train_acc = 0.8;
    sum.rounds[2].train_acc = 0.5;
    sum.rounds.back().active_clusters = 2;
    sum.rounds.back().concept_purity = 0.75;
    sum.composition = {t};
    sum.purity = purity_from_table(t, std::vector<std::uint8_t>{1, 1});
    std::ostringstream js;
    write_summary_json(js, sum);
    const auto j = nlohmann::json::parse(js.str());
    CHECK(j["algorithm"] == "fedrc");
    CHECK(j["selected_round"]["round"] == 0);
    CHECK(j["selected_round"]["train_acc"] == 0.8);
    CHECK(j["active_clusters"] == 2);
    CHECK(j["concept_purity"] == doctest::Approx(2.0 / 3));
    CHECK(j["gamma_converged_round"].is_null());
    CHECK(j["composition"]["concept"]["share"][1][1] == 1.0);
}
