// nonlin: command-line runner for the root-finding, fitting and bar FEM
// experiments. Each subcommand reads a JSON config, writes CSV (and a PPM
// for basin maps) into --out.
//
// Exit codes: 0 success, 1 usage error, 2 config error, 3 experiment failure.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nonlin/experiments.hpp"

namespace fs = std::filesystem;
namespace ex = nonlin::experiments;
using nonlin::RngSeed;

namespace {

constexpr int exit_usage = 1;
constexpr int exit_config = 2;
constexpr int exit_failure = 3;

class ExperimentFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
};

// --seed wins, then NONLIN_SEED, then the config's "seed", then 1.
RngSeed resolve_seed(const Common& c, const ex::json& cfg)
{
    if (c.seed)
        return RngSeed{*c.seed};
    if (const char* env = std::getenv("NONLIN_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used != std::string(env).size())
                throw std::invalid_argument(env);
            return RngSeed{v};
        } catch (const std::exception&) {
            throw ex::ConfigError(std::string("NONLIN_SEED is not an unsigned integer: ") + env);
        }
    }
    if (cfg.contains("seed")) {
        if (!cfg.at("seed").is_number_unsigned())
            throw ex::ConfigError("seed must be an unsigned integer");
        return RngSeed{cfg.at("seed").get<std::uint64_t>()};
    }
    return RngSeed{1};
}

ex::json read_config(const Common& c, bool required)
{
    if (c.config.empty()) {
        if (required)
            throw ex::ConfigError("--config is required");
        return ex::json::object();
    }
    ex::json j = ex::load_json(c.config);
    if (!j.is_object())
        throw ex::ConfigError("config root must be a JSON object");
    return j;
}

std::ofstream open_out(const Common& c, const std::string& name, bool binary = false)
{
    fs::create_directories(c.out);
    const fs::path p = fs::path(c.out) / name;
    std::ofstream os(p, binary ? std::ios::binary : std::ios::out);
    if (!os)
        throw std::runtime_error("cannot write " + p.string());
    return os;
}

int run_basin(const Common& c)
{
    const ex::json j = read_config(c, true);
    auto cfg = ex::parse_basin_config(j);
    const auto grid = ex::basin_map(cfg);
    const auto report = ex::grid_report(grid, nonlin::find_system(cfg.problem).known_roots.size());
    {
        auto os = open_out(c, "grid.csv");
        ex::write_grid_csv(os, grid);
    }
    {
        auto os = open_out(c, "report.csv");
        ex::write_report_csv(os, report);
    }
    {
        auto os = open_out(c, "basin.ppm", true);
        ex::render_ppm(os, grid);
    }
    std::cout << cfg.problem << ": coverage " << ex::fmt9(report.coverage_percent) << "%, converged "
              << ex::fmt9(report.converged_percent) << "%\n";
    return 0;
}

int run_mingrid(const Common& c)
{
    const ex::json j = read_config(c, true);
    auto cfg = ex::parse_mingrid_config(j);
    cfg.seed = resolve_seed(c, j);
    const auto grids = ex::minimisation_grid(cfg);
    auto os = open_out(c, "mingrid.csv");
    ex::write_mingrid_csv(os, grids);
    return 0;
}

int run_rateorder(const Common& c)
{
    const ex::json j = read_config(c, false);
    auto cfg = ex::parse_rate_order_config(j);
    cfg.seed = resolve_seed(c, j);
    const auto rep = ex::rate_order_report(cfg);
    auto os = open_out(c, "rateorder.csv");
    ex::write_rate_order_csv(os, rep);
    for (const auto& s : rep.series)
        std::cout << ex::method_name(s.method) << ": " << nonlin::to_string(s.trace.status) << " in "
                  << s.trace.iterations() << " steps\n";
    return 0;
}

int run_fem_forward(const Common& c)
{
    const ex::json j = read_config(c, true);
    const auto cfg = ex::parse_forward_config(j);
    const auto res = nonlin::fem::forward_solve(cfg.problem, ex::forward_method(cfg, resolve_seed(c, j)), cfg.tol);
    {
        auto os = open_out(c, "summary.csv");
        os << "method,status,iterations,total_length\n"
           << cfg.method << ',' << nonlin::to_string(res.trace.status) << ',' << res.trace.iterations() << ','
           << (res.state ? ex::fmt9(res.state->total_length()) : std::string()) << '\n';
    }
    if (!res.state)
        throw ExperimentFailure("forward solve did not converge: " + nonlin::to_string(res.trace.status));
    auto os = open_out(c, "deformed.csv");
    nonlin::fem::write_deformed_csv(os, cfg.problem, *res.state);
    std::cout << cfg.method << ": length " << ex::fmt9(res.state->total_length()) << " m after "
              << res.trace.iterations() << " steps\n";
    return 0;
}

int run_fem_inverse(const Common& c)
{
    const ex::json j = read_config(c, true);
    const auto cfg = ex::parse_inverse_config(j);
    const auto runs = ex::inverse_experiment(cfg, resolve_seed(c, j));
    auto os = open_out(c, "inverse.csv");
    ex::write_inverse_csv(os, runs);
    bool any = false;
    for (const auto& r : runs) {
        std::cout << ex::method_name(r.method) << ": " << nonlin::to_string(r.trace.status) << " in "
                  << r.trace.iterations() << " steps\n";
        any = any || r.trace.status.converged();
    }
    if (!any)
        throw ExperimentFailure("neither fit converged");
    return 0;
}

int run_phisweep(const Common& c)
{
    const ex::json j = read_config(c, true);
    const auto cfg = ex::parse_phisweep_config(j);
    const auto rows = nonlin::fem::phi_sweep(cfg.problem, cfg.start, cfg.stop, cfg.step, resolve_seed(c, j), cfg.tol);
    auto os = open_out(c, "phisweep.csv");
    ex::write_phisweep_csv(os, rows);
    return 0;
}

int run_beam(const Common& c)
{
    const ex::json j = read_config(c, false);
    const double theta0 = j.value("theta0", 2000.0);
    if (!(theta0 > 0.0))
        throw ex::ConfigError("theta0 must be positive");
    const auto rows = ex::beam_table(theta0);
    auto os = open_out(c, "beam.csv");
    ex::write_beam_csv(os, rows);
    ex::write_beam_csv(std::cout, rows);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Root finding, least-squares fitting and 1D bar FEM experiments"};
    app.require_subcommand(1);

    Common common;
    int (*handler)(const Common&) = nullptr;

    auto add = [&](const char* name, const char* help, int (*fn)(const Common&)) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", common.config, "JSON config file");
        sub->add_option("--out", common.out, "output directory")->capture_default_str();
        sub->add_option("--seed", common.seed, "seed override (falls back to NONLIN_SEED)");
        sub->callback([&handler, fn] { handler = fn; });
    };
    add("basin", "basin-of-attraction map and coverage report", run_basin);
    add("mingrid", "GN/CGN steps over a distance x noise grid", run_mingrid);
    add("rateorder", "rate and order of convergence of GN and CGN", run_rateorder);
    add("fem-forward", "forward bar solve (NR or ENR)", run_fem_forward);
    add("fem-inverse", "fit material constants to synthetic stress data", run_fem_inverse);
    add("phisweep", "ENR convergence against the modification factor", run_phisweep);
    add("beam", "worked Gauss-Newton cantilever example", run_beam);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // prints help or the error; --help exits 0
        return app.exit(e) == 0 ? 0 : exit_usage;
    }

    try {
        return handler(common);
    } catch (const ex::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const nonlin::UnknownProblem& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "experiment failed: " << e.what() << '\n';
        return exit_failure;
    }
}
