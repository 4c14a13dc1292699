#include "cli.hpp"

#include <fstream>
#include <optional>

#include <CLI11.hpp>

#include "commands.hpp"
#include "fedrc/error.hpp"

namespace fedrc::app {
namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::vector<std::string> sets;
    std::string preset;
    std::string out;
    std::size_t workers = 1;
    std::optional<std::size_t> rounds;
    std::string run;
    std::string attribute = "concept";
    bool hard = false;
};

ExperimentConfig resolve(const Options& o, bool need_algorithm) {
    ConfigRequest req;
    if (!o.config.empty()) req.file = o.config;
    req.preset = o.preset;
    req.overrides = o.sets;
    req.need_algorithm = need_algorithm;
    req.need_output_dir = o.out.empty();
    ExperimentConfig c = load_config(req);
    if (!o.out.empty()) c.output_dir = o.out;
    if (o.rounds) c.fed.rounds = *o.rounds;
    c.fed.workers = o.workers;
    return c;
}

int dispatch(CLI::App& app, const Options& o, std::ostream& out, std::ostream& err) {
    if (app.got_subcommand("generate")) {
        const auto c = resolve(o, false);
        cmd_generate(c, c.output_dir);
        out << "scenario written to " << c.output_dir.string() << '\n';
    } else if (app.got_subcommand("train")) {
        const auto c = resolve(o, true);
        cmd_train(c, c.output_dir, err);
        out << "run written to " << c.output_dir.string() << '\n';
    } else if (app.got_subcommand("compose")) {
        const auto attr = parse_attribute(o.attribute);
        const auto mode = o.hard ? CompositionMode::hard : CompositionMode::soft;
        if (o.out.empty()) {
            cmd_compose(o.run, attr, mode, out);
        } else {
            std::ofstream f(o.out, std::ios::binary);
            if (!f) throw IoError("cannot write " + o.out);
            cmd_compose(o.run, attr, mode, f);
        }
    } else if (app.got_subcommand("eval")) {
        const fs::path target = o.out.empty() ? fs::path(o.run) / "eval.json" : fs::path(o.out);
        std::ofstream f(target, std::ios::binary);
        if (!f) throw IoError("cannot write " + target.string());
        cmd_eval(o.run, o.workers, f);
        out << "evaluation written to " << target.string() << '\n';
    }
    return exit_ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Clustered federated learning simulator"};
    app.require_subcommand(1);
    Options o;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "INI experiment config");
        sub->add_option("--set", o.sets, "Override a config key (key=value), repeatable");
        sub->add_option("--preset", o.preset, "Scenario preset: standard or paper-mix");
        sub->add_option("--out", o.out, "Output directory (overrides output_dir)");
    };
    auto* gen = app.add_subcommand("generate", "Generate a scenario and write it to disk");
    add_config(gen);
    auto* train = app.add_subcommand("train", "Run an algorithm and write round reports");
    add_config(train);
    train->add_option("--workers", o.workers, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
    train->add_option("--rounds", o.rounds, "Override fed.rounds");

    auto* compose = app.add_subcommand("compose", "Export a cluster composition table");
    compose->add_option("--run", o.run, "Run directory written by train")->required();
    compose->add_option("--attribute", o.attribute, "class, style or concept");
    compose->add_flag("--hard", o.hard, "Count each sample in its argmax cluster");
    compose->add_option("--out", o.out, "CSV file (default: stdout)");

    auto* eval = app.add_subcommand("eval", "Re-evaluate a finished run");
    eval->add_option("--run", o.run, "Run directory written by train")->required();
    eval->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
    eval->add_option("--out", o.out, "JSON file (default: <run>/eval.json)");

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        return dispatch(app, o, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return exit_numeric;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return exit_io;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_internal;
    }
}

}  // namespace fedrc::app
