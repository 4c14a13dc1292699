#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "fedrc/error.hpp"
#include "fedrc/rng.hpp"
#include "fedrc/scenario.hpp"
#include "scenario_detail.hpp"

namespace fedrc {
namespace detail {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, std::size_t line) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ParseError("cannot parse number '" + std::string(text) + "'", line);
    }
    return v;
}

}  // namespace detail

namespace {

using nlohmann::json;

std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

int parse_label(std::string_view text, std::size_t line) {
    const double v = detail::parse_double(text, line);
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e6) {
        throw ParseError("label '" + std::string(text) + "' is not a nonnegative integer", line);
    }
    return static_cast<int>(v);
}

void write_rows(std::ostream& out, const ClientDataset& c, const Dataset& d) {
    for (std::size_t j = 0; j < d.size(); ++j) {
        for (double v : d.x(j)) out << detail::format_double(v) << ',';
        out << d.y(j) << ',' << c.id << ',' << c.concept_id << ',' << c.style << '\n';
    }
}

json client_header(const ClientDataset& c, bool participating) {
    return json{{"id", c.id},
                {"participating", participating},
                {"concept", c.concept_id},
                {"style", c.style},
                {"train", c.train.size()},
                {"test", c.test.size()}};
}

}  // namespace

void write_scenario(const FederatedScenario& sc, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

    json header;
    header["format"] = "fedrc-scenario";
    header["version"] = 1;
    header["input_dim"] = sc.input_dim;
    header["num_classes"] = sc.num_classes;
    header["num_styles"] = sc.num_styles;
    header["concept_maps"] = sc.concept_maps;
    header["concept_proportions"] = sc.concept_proportions;
    header["feature_shift_fraction"] = sc.feature_shift_fraction;
    json clients = json::array();
    for (const auto& c : sc.participating) clients.push_back(client_header(c, true));
    for (const auto& c : sc.nonparticipating) clients.push_back(client_header(c, false));
    header["clients"] = clients;

    std::ofstream h(dir / "scenario.json", std::ios::binary | std::ios::trunc);
    if (!h) throw IoError("cannot write " + (dir / "scenario.json").string());
    h << header.dump(2) << '\n';

    std::ofstream out(dir / "samples.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "samples.csv").string());
    for (std::size_t r = 0; r < sc.input_dim; ++r) out << 'x' << r << ',';
    out << "label,client,concept,style\n";
    for (const auto* group : {&sc.participating, &sc.nonparticipating}) {
        for (const auto& c : *group) {
            write_rows(out, c, c.train);
            write_rows(out, c, c.test);
        }
    }
    if (!out) throw IoError("write failed for " + (dir / "samples.csv").string());
}

FederatedScenario read_scenario(const std::filesystem::path& dir) {
    std::ifstream h(dir / "scenario.json", std::ios::binary);
    if (!h) throw IoError("cannot open " + (dir / "scenario.json").string());
    json header;
    try {
        header = json::parse(h);
    } catch (const json::exception& e) {
        throw IoError("malformed scenario header: " + std::string(e.what()));
    }
    FederatedScenario sc;
    try {
        if (header.at("format") != "fedrc-scenario") throw IoError("not a fedrc scenario header");
        sc.input_dim = header.at("input_dim").get<std::size_t>();
        sc.num_classes = header.at("num_classes").get<std::size_t>();
        sc.num_styles = header.at("num_styles").get<std::size_t>();
        sc.concept_maps = header.at("concept_maps").get<std::vector<ConceptMap>>();
        sc.concept_proportions = header.at("concept_proportions").get<std::vector<double>>();
        sc.feature_shift_fraction = header.at("feature_shift_fraction").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw IoError("scenario header: " + std::string(e.what()));
    }
    for (const auto& m : sc.concept_maps) {
        if (!is_permutation(m, sc.num_classes)) throw IoError("scenario header has an invalid concept map");
    }
    std::vector<ConceptMap> inverse;
    for (const auto& m : sc.concept_maps) inverse.push_back(invert(m));

    std::ifstream in(dir / "samples.csv", std::ios::binary);
    if (!in) throw IoError("cannot open " + (dir / "samples.csv").string());
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError("missing header row", line_no);
    const std::size_t d = sc.input_dim;

    for (const auto& ch : header.at("clients")) {
        ClientDataset c;
        c.id = ch.at("id").get<std::size_t>();
        c.concept_id = ch.at("concept").get<int>();
        c.style = ch.at("style").get<int>();
        if (c.concept_id < 0 || static_cast<std::size_t>(c.concept_id) >= sc.concept_maps.size()) {
            throw IoError("client " + std::to_string(c.id) + " has an unknown concept");
        }
        c.train = Dataset(d);
        c.test = Dataset(d);
        const std::size_t counts[2] = {ch.at("train").get<std::size_t>(), ch.at("test").get<std::size_t>()};
        std::vector<double> x(d);
        for (int part = 0; part < 2; ++part) {
            for (std::size_t j = 0; j < counts[part]; ++j) {
                ++line_no;
                if (!std::getline(in, line)) throw ParseError("unexpected end of samples", line_no);
                const auto fields = split(line, ',');
                if (fields.size() != d + 4) {
                    throw ParseError("expected " + std::to_string(d + 4) + " fields, got " +
                                         std::to_string(fields.size()), line_no);
                }
                for (std::size_t r = 0; r < d; ++r) x[r] = detail::parse_double(fields[r], line_no);
                const int label = parse_label(fields[d], line_no);
                if (static_cast<std::size_t>(label) >= sc.num_classes) throw ParseError("label out of range", line_no);
                if (parse_label(fields[d + 1], line_no) != static_cast<int>(c.id) ||
                    parse_label(fields[d + 2], line_no) != c.concept_id ||
                    parse_label(fields[d + 3], line_no) != c.style) {
                    throw ParseError("row annotations disagree with the header", line_no);
                }
                const int cls = inverse[static_cast<std::size_t>(c.concept_id)][static_cast<std::size_t>(label)];
                if (part == 0) {
                    c.train.add(x, label);
                    c.train_class.push_back(cls);
                } else {
                    c.test.add(x, label);
                    c.test_class.push_back(cls);
                }
            }
        }
        if (ch.at("participating").get<bool>()) {
            sc.participating.push_back(std::move(c));
        } else {
            sc.nonparticipating.push_back(std::move(c));
        }
    }
    if (std::getline(in, line) && !trim(line).empty()) throw ParseError("trailing rows after last client", line_no + 1);
    return sc;
}

void write_tabular(const FederatedScenario& sc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::size_t r = 0; r < sc.input_dim; ++r) out << 'x' << r << ',';
    out << "label\n";
    for (const auto& c : sc.participating) {
        for (const auto* part : {&c.train, &c.test}) {
            const auto& classes = part == &c.train ? c.train_class : c.test_class;
            for (std::size_t j = 0; j < part->size(); ++j) {
                for (double v : part->x(j)) out << detail::format_double(v) << ',';
                out << classes[j] << '\n';
            }
        }
    }
    if (!out) throw IoError("write failed for " + path.string());
}

FederatedScenario load_tabular(const std::filesystem::path& path, const TabularSchema& schema,
                               const ScenarioConfig& cfg_in) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    std::string line;
    std::size_t line_no = 0;
    std::size_t ncols = 0;
    std::size_t label_col = 0;
    bool label_resolved = false;
    if (schema.has_header) {
        if (!std::getline(in, line)) throw ParseError("empty table", 1);
        ++line_no;
        const auto names = split(line, schema.delimiter);
        ncols = names.size();
        for (std::size_t c = 0; c < ncols; ++c) {
            if (trim(names[c]) == schema.label_column) {
                label_col = c;
                label_resolved = true;
            }
        }
        if (!label_resolved) {
            throw ConfigError("label column '" + schema.label_column + "' not found in table header");
        }
    } else {
        try {
            std::size_t pos = 0;
            label_col = std::stoul(schema.label_column, &pos);
            if (pos != schema.label_column.size()) throw std::invalid_argument("index");
        } catch (const std::exception&) {
            throw ConfigError("label column must be a 0-based index when the table has no header");
        }
    }

    std::vector<std::vector<double>> rows_x;
    std::vector<int> rows_y;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line, schema.delimiter);
        if (ncols == 0) {
            ncols = fields.size();
            if (label_col >= ncols) throw ConfigError("label column index outside the table");
        }
        if (fields.size() != ncols) {
            throw ParseError("expected " + std::to_string(ncols) + " fields, got " + std::to_string(fields.size()),
                             line_no);
        }
        std::vector<double> x;
        x.reserve(ncols - 1);
        for (std::size_t c = 0; c < ncols; ++c) {
            if (c == label_col) continue;
            x.push_back(detail::parse_double(fields[c], line_no));
        }
        rows_y.push_back(parse_label(fields[label_col], line_no));
        rows_x.push_back(std::move(x));
    }
    if (rows_x.empty()) throw ConfigError("table has no data rows");
    if (ncols < 2) throw ConfigError("table needs at least one feature column");

    ScenarioConfig config = cfg_in;
    config.input_dim = ncols - 1;
    config.num_classes = static_cast<std::size_t>(*std::max_element(rows_y.begin(), rows_y.end())) + 1;
    if (config.num_classes < 2) throw ConfigError("table has fewer than two classes");
    if (!config.concept_maps.empty()) {
        for (const auto& m : config.concept_maps) {
            if (m.size() != config.num_classes) throw ConfigError("concept maps do not match the table's classes");
        }
    }
    config.finalize();
    const std::size_t C = config.num_classes;
    const std::size_t M = config.num_clients;

    // Per-class pools in a seeded order.
    std::vector<std::vector<std::size_t>> pools(C);
    for (std::size_t r = 0; r < rows_y.size(); ++r) pools[static_cast<std::size_t>(rows_y[r])].push_back(r);
    Rng prng = make_rng(config.seed, "tabular-pools");
    for (auto& p : pools) std::shuffle(p.begin(), p.end(), prng);

    // Balanced holdout: same count per class, at most half of the smallest class.
    std::size_t smallest = rows_y.size();
    for (const auto& p : pools) smallest = std::min(smallest, p.size());
    std::size_t want = config.holdout_adapt_per_class + config.holdout_test_per_class;
    const std::size_t per_class = std::min(want, smallest / 2);
    if (per_class < 2) throw ConfigError("every class needs at least 4 rows for the balanced holdout");
    const std::size_t adapt_per_class =
        std::max<std::size_t>(1, per_class * config.holdout_adapt_per_class / want);
    std::vector<std::vector<double>> ax, tx;
    std::vector<int> ay, ty;
    for (std::size_t r = 0; r < per_class; ++r) {
        for (std::size_t cls = 0; cls < C; ++cls) {
            const std::size_t row = pools[cls][r];
            auto& xs = r < adapt_per_class ? ax : tx;
            auto& ys = r < adapt_per_class ? ay : ty;
            xs.push_back(rows_x[row]);
            ys.push_back(static_cast<int>(cls));
        }
    }
    for (auto& p : pools) p.erase(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(per_class));

    // Per-class Dirichlet split over clients; redrawn until every client holds
    // at least two rows.
    std::vector<std::vector<std::size_t>> members;
    Rng drng = make_rng(config.seed, "tabular-partition");
    const std::vector<double> alpha(M, config.dirichlet_alpha);
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
        members.assign(M, {});
        for (std::size_t cls = 0; cls < C; ++cls) {
            const auto share = sample_dirichlet(alpha, drng);
            const auto counts = detail::apportion(pools[cls].size(), share);
            std::size_t pos = 0;
            for (std::size_t i = 0; i < M; ++i) {
                for (std::size_t n = 0; n < counts[i]; ++n) members[i].push_back(pools[cls][pos++]);
            }
        }
        ok = std::all_of(members.begin(), members.end(), [](const auto& m) { return m.size() >= 2; });
    }
    if (!ok) throw ConfigError("table too small to give every client at least two rows");

    FederatedScenario sc;
    sc.input_dim = config.input_dim;
    sc.num_classes = C;
    sc.num_styles = config.num_feature_styles;
    sc.concept_maps = config.concept_maps;
    sc.concept_proportions = config.concept_proportions;
    sc.feature_shift_fraction = config.feature_shift_fraction;

    const auto styles = detail::make_styles(config, config.input_dim);
    std::vector<int> concept_of, style_of;
    detail::assign_concepts(config, concept_of, style_of);
    for (std::size_t i = 0; i < M; ++i) {
        Rng rng = make_rng(config.seed, "tabular-client", i);
        auto idx = members[i];
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<std::vector<double>> xs;
        std::vector<int> classes;
        for (auto r : idx) {
            xs.push_back(rows_x[r]);
            classes.push_back(rows_y[r]);
        }
        const int c = concept_of[i];
        sc.participating.push_back(detail::build_client(
            i, c, style_of[i], config.concept_maps[static_cast<std::size_t>(c)],
            styles[static_cast<std::size_t>(style_of[i])], xs, classes, config.test_fraction));
    }
    detail::add_nonparticipating(sc, ax, ay, tx, ty, M);
    return sc;
}

}  // namespace fedrc
