#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ncx/experiment.hpp"
#include "ncx/symbol_io.hpp"

using namespace ncx;

namespace {

// Command-line flags and the config fields they set.
const std::vector<std::pair<std::string, std::string>> kFlags = {
    {"--backend", "backend"},   {"--N", "N"},
    {"--L", "L"},               {"--M", "M"},
    {"--theta-h", "h"},              {"--calibration", "calibration"},
    {"--ineq", "kind"},         {"--family", "family"},
    {"--samples", "samples"},   {"--seed", "seed"},
    {"--p", "p"},               {"--q", "q"},
    {"--r", "r"},               {"--s", "s"},
    {"--kernel", "kernel"},     {"--b", "b"},
    {"--m", "m"},               {"--p-nl", "p_nl"},
    {"--nonlinearity", "nonlinearity"},
    {"--eps", "eps"},           {"--t-max", "t_max"},
    {"--steps", "steps"},       {"--picard-max", "picard_max"},
    {"--tol", "tol"},           {"--times", "times"},
    {"--out", "out"},           {"--csv", "csv"},
    {"--plotdata", "plotdata"}, {"--manifest", "manifest"},
};

struct ExperimentArgs {
    std::string config_path;
    std::vector<std::string> assignments;
    std::map<std::string, std::string> flags;
    bool no_refine = false;
};

void add_experiment_options(CLI::App* sub, ExperimentArgs& a) {
    sub->add_option("--config", a.config_path, "key = value configuration file");
    for (const auto& [flag, field] : kFlags) sub->add_option(flag, a.flags[field], "sets '" + field + "'");
    sub->add_flag("--no-refine", a.no_refine, "skip the refined rerun");
    sub->add_option("assignments", a.assignments, "extra key=value settings, applied last");
}

ExperimentConfig build_config(const std::string& experiment, const ExperimentArgs& a) {
    ExperimentConfig cfg = a.config_path.empty() ? ExperimentConfig() : ExperimentConfig::load(a.config_path);
    if (cfg.is_set("experiment") && cfg.experiment() != experiment)
        throw ConfigError("config: field 'experiment': the file asks for '" + cfg.experiment() + "' but the subcommand is '" +
                          experiment + "'");
    cfg.set("experiment", experiment);
    for (const auto& [field, value] : a.flags)
        if (!value.empty()) cfg.set(field, value);
    if (a.no_refine) cfg.set("refine", "false");
    for (const std::string& s : a.assignments) cfg.set_assignment(s);
    return cfg;
}

int run(const std::string& experiment, const ExperimentArgs& a) {
    const ExperimentConfig cfg = build_config(experiment, a);
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentResult result = run_experiment(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    for (const CheckOutcome& c : result.checks) {
        std::ostream& os = c.pass ? std::cout : std::cerr;
        os << (c.pass ? "PASS " : "FAIL ") << experiment << " " << c.name << ": " << c.detail << "\n";
    }
    for (const std::string& path : write_outputs(cfg, result, secs)) std::cout << "wrote " << path << "\n";
    if (cfg.str("out").empty()) std::cout << emit_report(result.report, ReportFormat::Json);
    return exit_code_for(result);
}

int run_report(const std::string& in, const std::string& format, const std::string& out) {
    std::ifstream is(in);
    if (!is) throw IoError("report: cannot open '" + in + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    const std::string text = emit_report(parse_report(ss.str()), report_format_from_string(format));
    if (out.empty()) std::cout << text;
    else atomic_write(out, text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ncx: numerics on noncommutative Euclidean spaces"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    const std::vector<std::pair<std::string, std::string>> experiments = {
        {"calibrate", "calibrate the matrix trace and write a calibration manifest"},
        {"check", "check functional inequalities on a test family"},
        {"estimate", "estimate the best constant of an inequality"},
        {"equivalence", "Sobolev, Nash, heat-kernel and log-Sobolev on one family (d > 2)"},
        {"heat", "heat flow: mass, L2 decay and the Nash-implied bound"},
        {"wave", "linear damped wave equation and its decay rate"},
        {"semilinear", "semilinear damped wave equation by Picard iteration"},
    };
    std::map<std::string, ExperimentArgs> args;
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, help] : experiments) {
        subs[name] = app.add_subcommand(name, help);
        add_experiment_options(subs[name], args[name]);
    }

    std::string report_in, report_format = "json", report_out;
    CLI::App* rep = app.add_subcommand("report", "re-emit a JSON report as json, csv or plotdata");
    rep->add_option("--in", report_in, "report JSON")->required();
    rep->add_option("--format", report_format, "json, csv or plotdata");
    rep->add_option("--out", report_out, "output path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (rep->parsed()) return run_report(report_in, report_format, report_out);
        for (const auto& [name, sub] : subs)
            if (sub->parsed()) return run(name, args[name]);
    } catch (const ConfigError& e) {
        std::cerr << "ncx: configuration error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "ncx: invalid request: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "ncx: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "ncx: numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "ncx: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
