#pragma once

// Experiment drivers shared by the command-line tool and the tests: basin
// maps with coverage reports, distance x noise minimisation grids,
// rate/order reports, FEM case configs, PPM rendering and JSON configs.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nonlin/fem1d.hpp"
#include "nonlin/minimize.hpp"
#include "nonlin/problems.hpp"
#include "nonlin/rootfind.hpp"

namespace nonlin::experiments {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Runs body(k) for k in [0, count) on `threads` workers (0 = hardware).
// Each index is handled by exactly one worker; results are written by
// index so the outcome does not depend on scheduling.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body)
{
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
    if (threads <= 1) {
        for (std::size_t k = 0; k < count; ++k)
            body(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::mutex err_mutex;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < count && !failed; k = next++) {
                try {
                    body(k);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (!first_error)
                        first_error = std::current_exception();
                    failed = true;
                }
            }
        });
    for (auto& th : pool)
        th.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

inline std::string fmt9(double v)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Basin maps

namespace status_code {
inline constexpr int unmatched = -3;
inline constexpr int diverged = -2;
inline constexpr int max_iters = -1;
} // namespace status_code

enum class RootMethod { Newton, Extended };

struct BasinConfig {
    std::string problem = "rf5";
    RootMethod method = RootMethod::Newton;
    std::optional<CPolicy> policy;  // required for Extended
    CUpdate c_update = CUpdate::FromInitialGuess;
    Interval x0_range{-50.0, 50.0};
    Interval x1_range{-50.0, 50.0};
    std::size_t nx = 128;
    std::size_t ny = 128;
    Tolerances tol{};
    double match_radius = 1e-2;
    unsigned threads = 0;
};

struct BasinGrid {
    Interval x0_range{};
    Interval x1_range{};
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t max_iters = 100;
    std::vector<int> status;  // cell (i, j) at index j * nx + i
    std::vector<int> iters;

    std::size_t index(std::size_t i, std::size_t j) const { return j * nx + i; }

    // Initial guess for cell (i, j): its centre.
    Vector cell_centre(std::size_t i, std::size_t j) const
    {
        const double w0 = (x0_range.hi - x0_range.lo) / static_cast<double>(nx);
        const double w1 = (x1_range.hi - x1_range.lo) / static_cast<double>(ny);
        return {x0_range.lo + (static_cast<double>(i) + 0.5) * w0, x1_range.lo + (static_cast<double>(j) + 0.5) * w1};
    }
};

struct GridReport {
    std::size_t cells = 0;
    double coverage_percent = 0.0;   // cells that reached a known root
    double converged_percent = 0.0;  // reached a known root or converged elsewhere
    std::vector<std::size_t> per_root;
    std::size_t unmatched = 0;
    std::size_t max_iters = 0;
    std::size_t diverged = 0;
    double mean_iterations = 0.0;  // over converged cells, matched or not
};

// Index of the nearest known root within `radius`, or -1.
inline int match_root(const std::vector<Vector>& roots, const Vector& x, double radius)
{
    int best = -1;
    double best_d = radius;
    for (std::size_t k = 0; k < roots.size(); ++k) {
        const double d = norm2(x - roots[k]);
        if (d <= best_d) {
            best_d = d;
            best = static_cast<int>(k);
        }
    }
    return best;
}

inline void validate(const BasinConfig& cfg)
{
    if (!is_system_name(cfg.problem))
        throw ConfigError("unknown problem '" + cfg.problem + "'");
    if (find_system(cfg.problem).dim != 2)
        throw ConfigError("basin maps need a two-dimensional problem");
    if (cfg.nx == 0 || cfg.ny == 0)
        throw ConfigError("resolution must be positive");
    if (!(cfg.x0_range.hi > cfg.x0_range.lo) || !(cfg.x1_range.hi > cfg.x1_range.lo))
        throw ConfigError("ranges must have hi > lo");
    if (cfg.method == RootMethod::Extended && !cfg.policy)
        throw ConfigError("the extended method needs a c policy");
    if (!(cfg.match_radius > 0.0))
        throw ConfigError("match radius must be positive");
    try {
        cfg.tol.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

inline SolveTrace solve_cell(const ProblemSystem& sys, const BasinConfig& cfg, const Vector& x0)
{
    if (cfg.method == RootMethod::Newton)
        return newton_raphson(sys, x0, cfg.tol);
    return enr_solve(sys, x0, *cfg.policy, cfg.tol, cfg.c_update);
}

inline BasinGrid basin_map(const BasinConfig& cfg)
{
    validate(cfg);
    const ProblemSystem sys = find_system(cfg.problem);
    BasinGrid g;
    g.x0_range = cfg.x0_range;
    g.x1_range = cfg.x1_range;
    g.nx = cfg.nx;
    g.ny = cfg.ny;
    g.max_iters = cfg.tol.max_iters;
    g.status.assign(g.nx * g.ny, 0);
    g.iters.assign(g.nx * g.ny, 0);
    parallel_for(g.ny, cfg.threads, [&](std::size_t j) {
        for (std::size_t i = 0; i < g.nx; ++i) {
            const SolveTrace tr = solve_cell(sys, cfg, g.cell_centre(i, j));
            int code = status_code::max_iters;
            if (tr.status.converged()) {
                const int k = match_root(sys.known_roots, tr.final_iterate(), cfg.match_radius);
                code = k >= 0 ? k : status_code::unmatched;
            } else if (tr.status.diverged()) {
                code = status_code::diverged;
            }
            g.status[g.index(i, j)] = code;
            g.iters[g.index(i, j)] = static_cast<int>(tr.iterations());
        }
    });
    return g;
}

inline GridReport grid_report(const BasinGrid& g, std::size_t root_count)
{
    GridReport r;
    r.cells = g.status.size();
    r.per_root.assign(root_count, 0);
    std::size_t matched = 0;
    double iter_sum = 0.0;
    for (std::size_t k = 0; k < g.status.size(); ++k) {
        const int s = g.status[k];
        if (s >= 0) {
            ++matched;
            if (static_cast<std::size_t>(s) >= r.per_root.size())
                r.per_root.resize(static_cast<std::size_t>(s) + 1, 0);
            ++r.per_root[static_cast<std::size_t>(s)];
        } else if (s == status_code::unmatched) {
            ++r.unmatched;
        } else if (s == status_code::max_iters) {
            ++r.max_iters;
        } else {
            ++r.diverged;
        }
        if (s >= 0 || s == status_code::unmatched)
            iter_sum += g.iters[k];
    }
    const double total = static_cast<double>(r.cells);
    const std::size_t converged = matched + r.unmatched;
    if (r.cells > 0) {
        r.coverage_percent = 100.0 * static_cast<double>(matched) / total;
        r.converged_percent = 100.0 * static_cast<double>(converged) / total;
    }
    if (converged > 0)
        r.mean_iterations = iter_sum / static_cast<double>(converged);
    return r;
}

inline void write_grid_csv(std::ostream& os, const BasinGrid& g)
{
    os << "i,j,x0,x1,status,iterations\n";
    for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t i = 0; i < g.nx; ++i) {
            const Vector c = g.cell_centre(i, j);
            os << i << ',' << j << ',' << fmt9(c[0]) << ',' << fmt9(c[1]) << ',' << g.status[g.index(i, j)] << ','
               << g.iters[g.index(i, j)] << '\n';
        }
}

inline void write_report_csv(std::ostream& os, const GridReport& r)
{
    os << "metric,value\n";
    os << "cells," << r.cells << '\n';
    os << "coverage_percent," << fmt9(r.coverage_percent) << '\n';
    os << "converged_percent," << fmt9(r.converged_percent) << '\n';
    for (std::size_t k = 0; k < r.per_root.size(); ++k)
        os << "root_" << k << ',' << r.per_root[k] << '\n';
    os << "unmatched," << r.unmatched << '\n';
    os << "max_iters," << r.max_iters << '\n';
    os << "diverged," << r.diverged << '\n';
    os << "mean_iterations," << fmt9(r.mean_iterations) << '\n';
}

// ---------------------------------------------------------------------------
// PPM rendering

using Rgb = std::array<std::uint8_t, 3>;

inline const std::vector<Rgb>& default_palette()
{
    static const std::vector<Rgb> p{{220, 40, 40}, {40, 90, 220}, {30, 160, 60}, {230, 160, 20}, {150, 60, 190}, {20, 170, 180}};
    return p;
}

inline constexpr Rgb unmatched_colour{128, 128, 128};

// Root k gets palette[k]; the colour fades linearly towards white with the
// iteration count, reaching 90% of the way at max_iters.
inline Rgb cell_colour(int status, int iters, std::size_t max_iters, const std::vector<Rgb>& palette)
{
    if (status == status_code::max_iters)
        return {255, 255, 255};
    if (status == status_code::diverged)
        return {0, 0, 0};
    if (status == status_code::unmatched)
        return unmatched_colour;
    if (palette.empty())
        throw std::invalid_argument("palette is empty");
    const Rgb base = palette[static_cast<std::size_t>(status) % palette.size()];
    const double t =
        0.9 * std::clamp(static_cast<double>(iters) / static_cast<double>(std::max<std::size_t>(max_iters, 1)), 0.0, 1.0);
    Rgb out{};
    for (int c = 0; c < 3; ++c)
        out[c] = static_cast<std::uint8_t>(std::lround(base[c] + (255.0 - base[c]) * t));
    return out;
}

// Binary P6, one pixel per cell; the top image row is the largest x1.
inline void render_ppm(std::ostream& os, const BasinGrid& g, const std::vector<Rgb>& palette = default_palette())
{
    os << "P6\n" << g.nx << ' ' << g.ny << "\n255\n";
    std::vector<char> row(g.nx * 3);
    for (std::size_t r = 0; r < g.ny; ++r) {
        const std::size_t j = g.ny - 1 - r;
        for (std::size_t i = 0; i < g.nx; ++i) {
            const Rgb c = cell_colour(g.status[g.index(i, j)], g.iters[g.index(i, j)], g.max_iters, palette);
            for (int k = 0; k < 3; ++k)
                row[i * 3 + k] = static_cast<char>(c[k]);
        }
        os.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!os)
        throw std::runtime_error("failed to write PPM image");
}

// ---------------------------------------------------------------------------
// Distance x noise minimisation grids

struct MinGridConfig {
    std::string model = "gn2";
    std::vector<FitMethod> methods{FitMethod::GaussNewton, FitMethod::CorrectedGaussNewton};
    std::vector<double> distances;              // log-spaced by default
    std::vector<std::optional<double>> snr_db;  // nullopt = noiseless
    std::size_t observations = 50;
    std::size_t repetitions = 3;
    Tolerances tol = fit_tolerances();
    RngSeed seed{1};
    unsigned threads = 0;
};

inline std::vector<double> log_spaced(double lo, double hi, std::size_t count)
{
    if (!(lo > 0.0) || !(hi >= lo) || count == 0)
        throw std::invalid_argument("log spacing needs 0 < lo <= hi and count > 0");
    std::vector<double> v(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double t = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
        v[k] = lo * std::pow(hi / lo, t);
    }
    return v;
}

struct DistanceNoiseGrid {
    std::string model;
    FitMethod method = FitMethod::GaussNewton;
    std::vector<double> distances;
    std::vector<std::optional<double>> snr_db;
    std::size_t repetitions = 3;
    // Row-major [snr][distance]; nullopt marks a cell where some repetition
    // did not converge.
    std::vector<std::optional<double>> mean_steps;

    const std::optional<double>& at(std::size_t snr_idx, std::size_t dist_idx) const
    {
        return mean_steps[snr_idx * distances.size() + dist_idx];
    }
};

inline void validate(const MinGridConfig& cfg)
{
    if (!is_model_name(cfg.model))
        throw ConfigError("unknown model '" + cfg.model + "'");
    if (!find_model(cfg.model).model.true_params)
        throw ConfigError("model '" + cfg.model + "' has no reference parameters");
    if (cfg.distances.empty() || cfg.snr_db.empty() || cfg.methods.empty())
        throw ConfigError("distances, snr values and methods must be non-empty");
    for (double d : cfg.distances)
        if (!(d >= 0.0) || !std::isfinite(d))
            throw ConfigError("distances must be finite and non-negative");
    if (cfg.observations == 0 || cfg.repetitions == 0)
        throw ConfigError("observations and repetitions must be positive");
}

// Repetition r of a cell uses observations seeded by (snr index, r) and an
// initial guess seeded by (distance index, r); the GN and CGN grids share
// both so they are directly comparable.
inline std::vector<DistanceNoiseGrid> minimisation_grid(const MinGridConfig& cfg)
{
    validate(cfg);
    const ModelRegistryEntry entry = find_model(cfg.model);
    const Vector& theta_star = *entry.model.true_params;
    const RngSeed data_root = derive_seed(cfg.seed, 1);
    const RngSeed guess_root = derive_seed(cfg.seed, 2);
    const std::size_t nd = cfg.distances.size();
    const std::size_t ns = cfg.snr_db.size();

    std::vector<DistanceNoiseGrid> grids;
    for (FitMethod m : cfg.methods) {
        DistanceNoiseGrid g;
        g.model = cfg.model;
        g.method = m;
        g.distances = cfg.distances;
        g.snr_db = cfg.snr_db;
        g.repetitions = cfg.repetitions;
        g.mean_steps.assign(nd * ns, std::nullopt);
        grids.push_back(std::move(g));
    }
    parallel_for(nd * ns, cfg.threads, [&](std::size_t cell) {
        const std::size_t si = cell / nd;
        const std::size_t di = cell % nd;
        std::vector<double> sums(grids.size(), 0.0);
        std::vector<bool> ok(grids.size(), true);
        for (std::size_t r = 0; r < cfg.repetitions; ++r) {
            const Observations obs = generate_observations(entry.model, entry.sampling_range, cfg.observations,
                                                           cfg.snr_db[si], derive_seed(derive_seed(data_root, si), r));
            const Vector theta0 =
                initial_guess_at_distance(theta_star, cfg.distances[di], derive_seed(derive_seed(guess_root, di), r));
            for (std::size_t k = 0; k < grids.size(); ++k) {
                const FitTrace tr = fit(grids[k].method, entry.model, obs, theta0, cfg.tol);
                if (tr.status.converged())
                    sums[k] += static_cast<double>(tr.iterations());
                else
                    ok[k] = false;
            }
        }
        for (std::size_t k = 0; k < grids.size(); ++k)
            if (ok[k])
                grids[k].mean_steps[cell] = sums[k] / static_cast<double>(cfg.repetitions);
    });
    return grids;
}

inline std::string method_name(FitMethod m) { return m == FitMethod::GaussNewton ? "gn" : "cgn"; }

inline std::string snr_label(const std::optional<double>& snr) { return snr ? fmt9(*snr) : "none"; }

inline void write_mingrid_csv(std::ostream& os, const std::vector<DistanceNoiseGrid>& grids)
{
    os << "method,snr_db,distance,mean_steps\n";
    for (const auto& g : grids)
        for (std::size_t si = 0; si < g.snr_db.size(); ++si)
            for (std::size_t di = 0; di < g.distances.size(); ++di) {
                const auto& v = g.at(si, di);
                os << method_name(g.method) << ',' << snr_label(g.snr_db[si]) << ',' << fmt9(g.distances[di]) << ','
                   << (v ? fmt9(*v) : std::string("unconverged")) << '\n';
            }
}

// ---------------------------------------------------------------------------
// Rate and order of convergence

struct RateOrderConfig {
    std::string model = "gn2";
    Vector theta0{10.0, 10.0, 10.0, 10.0, 10.0};
    std::optional<double> snr_db;  // nullopt = noiseless
    std::size_t observations = 50;
    Tolerances tol = fit_tolerances();
    RngSeed seed{1};
};

struct RateOrderSeries {
    FitMethod method = FitMethod::GaussNewton;
    FitTrace trace;
    std::vector<double> errors;  // e_n against the reference parameters
    RateOrderEstimate estimate;  // entry k belongs to n = k + 1
};

struct RateOrderReport {
    Vector reference;
    std::vector<RateOrderSeries> series;  // GN then CGN
};

inline void validate(const RateOrderConfig& cfg)
{
    if (!is_model_name(cfg.model))
        throw ConfigError("unknown model '" + cfg.model + "'");
    const auto entry = find_model(cfg.model);
    if (cfg.theta0.size() != entry.model.param_count)
        throw ConfigError("theta0 has the wrong number of parameters");
    if (cfg.observations < entry.model.param_count)
        throw ConfigError("too few observations for the model");
}

// Errors are measured against the model's reference parameters when it has
// them, otherwise against each run's final iterate.
inline RateOrderReport rate_order_report(const RateOrderConfig& cfg)
{
    validate(cfg);
    const ModelRegistryEntry entry = find_model(cfg.model);
    const Observations obs =
        generate_observations(entry.model, entry.sampling_range, cfg.observations, cfg.snr_db, cfg.seed);
    RateOrderReport rep;
    for (FitMethod m : {FitMethod::GaussNewton, FitMethod::CorrectedGaussNewton}) {
        RateOrderSeries s;
        s.method = m;
        s.trace = fit(m, entry.model, obs, cfg.theta0, cfg.tol);
        const Vector ref = entry.model.true_params ? *entry.model.true_params : s.trace.final_iterate();
        rep.reference = ref;
        s.errors = error_sequence(s.trace.iterates, ref);
        if (s.errors.size() >= 4)
            s.estimate = estimate_rate_order(s.errors);
        rep.series.push_back(std::move(s));
    }
    return rep;
}

inline void write_rate_order_csv(std::ostream& os, const RateOrderReport& rep)
{
    os << "method,n,error,q,mu\n";
    for (const auto& s : rep.series)
        for (std::size_t k = 0; k < s.estimate.order_q.size(); ++k)
            os << method_name(s.method) << ',' << k + 1 << ',' << fmt9(s.errors[k + 1]) << ','
               << fmt9(s.estimate.order_q[k]) << ',' << fmt9(s.estimate.rate_mu[k]) << '\n';
}

// ---------------------------------------------------------------------------
// Worked beam example

struct BeamRow {
    std::size_t iteration;
    double theta;
    double step;
};

inline Tolerances beam_tolerances()
{
    Tolerances t = fit_tolerances();
    t.rel_step = 1e-3;
    return t;
}

inline std::vector<BeamRow> beam_table(double theta0 = 2000.0)
{
    const FitTrace tr = gauss_newton(beam_model(), beam_observations(), Vector{theta0}, beam_tolerances());
    std::vector<BeamRow> rows;
    for (std::size_t n = 0; n < tr.steps.size(); ++n)
        rows.push_back({n, tr.iterates[n][0], tr.steps[n][0]});
    return rows;
}

inline void write_beam_csv(std::ostream& os, const std::vector<BeamRow>& rows)
{
    char buf[96];
    os << "iteration,theta_cm4,step_cm4\n";
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.3f,%.4f\n", r.iteration, r.theta, r.step);
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// JSON configs

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback)
{
    if (!j.contains(key) || j.at(key).is_null())
        return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline Interval parse_interval(const json& j, const char* what)
{
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError(std::string(what) + " must be a [lo, hi] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline Vector parse_vector(const json& j, const char* what)
{
    if (!j.is_array())
        throw ConfigError(std::string(what) + " must be an array of numbers");
    Vector v;
    for (const auto& e : j) {
        if (!e.is_number())
            throw ConfigError(std::string(what) + " must be an array of numbers");
        v.push_back(e.get<double>());
    }
    return v;
}

inline std::optional<double> parse_snr(const json& j)
{
    if (j.is_null() || (j.is_string() && j.get<std::string>() == "none"))
        return std::nullopt;
    if (!j.is_number())
        throw ConfigError("snr values must be numbers, null or \"none\"");
    return j.get<double>();
}

inline FitMethod parse_fit_method(const std::string& s)
{
    if (s == "gn")
        return FitMethod::GaussNewton;
    if (s == "cgn")
        return FitMethod::CorrectedGaussNewton;
    throw ConfigError("unknown fit method '" + s + "' (expected gn or cgn)");
}

} // namespace detail

inline json load_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("invalid JSON in '" + path + "': " + e.what());
    }
}

// {"t_r": 1e-6, "t_a": 0.001414, "max_iters": 100}; missing keys keep `base`.
inline Tolerances parse_tolerances(const json& j, Tolerances base)
{
    if (j.is_null())
        return base;
    if (!j.is_object())
        throw ConfigError("tolerances must be an object");
    base.rel_step = detail::get_or(j, "t_r", base.rel_step);
    base.abs_residual = detail::get_or(j, "t_a", base.abs_residual);
    base.max_iters = detail::get_or<std::size_t>(j, "max_iters", base.max_iters);
    base.require_residual = detail::get_or(j, "require_residual", base.require_residual);
    try {
        base.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return base;
}

// {"kind": "scale", "phi": 2} | {"kind": "per_axis", "phi": [3, 2]} |
// {"kind": "offset", "delta": 1e-5} | {"kind": "constant", "c": [1, 2]}
inline CPolicy parse_c_policy(const json& j)
{
    if (!j.is_object() || !j.contains("kind"))
        throw ConfigError("c_policy must be an object with a 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    auto need = [&](const char* key) -> const json& {
        if (!j.contains(key))
            throw ConfigError("c_policy '" + kind + "' needs '" + key + "'");
        return j.at(key);
    };
    if (kind == "scale") {
        if (!need("phi").is_number())
            throw ConfigError("c_policy phi must be a number");
        return ScaleAll{j.at("phi").get<double>()};
    }
    if (kind == "per_axis")
        return ScalePerAxis{detail::parse_vector(need("phi"), "c_policy phi")};
    if (kind == "offset") {
        if (!need("delta").is_number())
            throw ConfigError("c_policy delta must be a number");
        return Offset{j.at("delta").get<double>()};
    }
    if (kind == "constant")
        return ConstantC{detail::parse_vector(need("c"), "c_policy c")};
    throw ConfigError("unknown c_policy kind '" + kind + "'");
}

inline BasinConfig parse_basin_config(const json& j)
{
    BasinConfig cfg;
    try {
        cfg.problem = detail::get_or<std::string>(j, "problem", cfg.problem);
        const std::string method = detail::get_or<std::string>(j, "method", "nr");
        if (method == "nr")
            cfg.method = RootMethod::Newton;
        else if (method == "enr")
            cfg.method = RootMethod::Extended;
        else
            throw ConfigError("unknown method '" + method + "' (expected nr or enr)");
        if (j.contains("c_policy"))
            cfg.policy = parse_c_policy(j.at("c_policy"));
        const std::string update = detail::get_or<std::string>(j, "c_update", "initial");
        if (update == "initial")
            cfg.c_update = CUpdate::FromInitialGuess;
        else if (update == "iterate")
            cfg.c_update = CUpdate::FromCurrentIterate;
        else
            throw ConfigError("c_update must be 'initial' or 'iterate'");
        if (j.contains("x0_range"))
            cfg.x0_range = detail::parse_interval(j.at("x0_range"), "x0_range");
        if (j.contains("x1_range"))
            cfg.x1_range = detail::parse_interval(j.at("x1_range"), "x1_range");
        if (j.contains("resolution")) {
            const json& r = j.at("resolution");
            if (r.is_number_unsigned()) {
                cfg.nx = cfg.ny = r.get<std::size_t>();
            } else if (r.is_array() && r.size() == 2 && r[0].is_number_unsigned() && r[1].is_number_unsigned()) {
                cfg.nx = r[0].get<std::size_t>();
                cfg.ny = r[1].get<std::size_t>();
            } else {
                throw ConfigError("resolution must be a positive integer or [nx, ny]");
            }
        }
        if (j.contains("tolerances"))
            cfg.tol = parse_tolerances(j.at("tolerances"), cfg.tol);
        cfg.match_radius = detail::get_or(j, "match_radius", cfg.match_radius);
        cfg.threads = detail::get_or<unsigned>(j, "threads", cfg.threads);
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    }
    validate(cfg);
    return cfg;
}

inline MinGridConfig parse_mingrid_config(const json& j)
{
    MinGridConfig cfg;
    try {
        cfg.model = detail::get_or<std::string>(j, "model", cfg.model);
        if (j.contains("methods")) {
            cfg.methods.clear();
            for (const auto& m : j.at("methods"))
                cfg.methods.push_back(detail::parse_fit_method(m.get<std::string>()));
        }
        if (j.contains("distances")) {
            const json& d = j.at("distances");
            if (d.is_object())
                cfg.distances = log_spaced(d.at("min").get<double>(), d.at("max").get<double>(),
                                           d.at("count").get<std::size_t>());
            else
                cfg.distances = detail::parse_vector(d, "distances");
        } else {
            cfg.distances = log_spaced(1.0, 100.0, 5);
        }
        if (j.contains("snr_db")) {
            for (const auto& s : j.at("snr_db"))
                cfg.snr_db.push_back(detail::parse_snr(s));
        } else {
            cfg.snr_db = {std::nullopt};
        }
        cfg.observations = detail::get_or<std::size_t>(j, "observations", cfg.observations);
        cfg.repetitions = detail::get_or<std::size_t>(j, "repetitions", cfg.repetitions);
        if (j.contains("tolerances"))
            cfg.tol = parse_tolerances(j.at("tolerances"), cfg.tol);
        cfg.threads = detail::get_or<unsigned>(j, "threads", cfg.threads);
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    validate(cfg);
    return cfg;
}

inline RateOrderConfig parse_rate_order_config(const json& j)
{
    RateOrderConfig cfg;
    try {
        cfg.model = detail::get_or<std::string>(j, "model", cfg.model);
        if (j.contains("theta0"))
            cfg.theta0 = detail::parse_vector(j.at("theta0"), "theta0");
        if (j.contains("snr_db"))
            cfg.snr_db = detail::parse_snr(j.at("snr_db"));
        cfg.observations = detail::get_or<std::size_t>(j, "observations", cfg.observations);
        if (j.contains("tolerances"))
            cfg.tol = parse_tolerances(j.at("tolerances"), cfg.tol);
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    }
    validate(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------
// FEM configs

// {"model": "veronda-westmann", "A": 2.48446, "B": 0.1686} |
// {"model": "mooney-rivlin", "mu": 5.289, "nu": 0.6417} |
// {"model": "linear", "E": 100}
inline fem::MaterialModel parse_material(const json& j)
{
    if (!j.is_object() || !j.contains("model"))
        throw ConfigError("material must be an object with a 'model'");
    const std::string m = j.at("model").get<std::string>();
    auto num = [&](const char* key) {
        if (!j.contains(key) || !j.at(key).is_number())
            throw ConfigError("material '" + m + "' needs numeric '" + key + "'");
        return j.at(key).get<double>();
    };
    fem::MaterialModel mat;
    if (m == "linear")
        mat = fem::LinearElastic{num("E")};
    else if (m == "mooney-rivlin")
        mat = fem::MooneyRivlin{num("mu"), num("nu")};
    else if (m == "veronda-westmann")
        mat = fem::VerondaWestmann{num("A"), num("B")};
    else
        throw ConfigError("unknown material model '" + m + "'");
    try {
        fem::validate(mat);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return mat;
}

inline fem::ForwardProblem parse_forward_problem(const json& j)
{
    try {
        if (!j.contains("material"))
            throw ConfigError("config needs a 'material'");
        const fem::MaterialModel mat = parse_material(j.at("material"));
        const json mesh = j.value("mesh", json::object());
        const auto elements = detail::get_or<std::size_t>(mesh, "elements", 5);
        const double length = detail::get_or(mesh, "length", 2.0);
        if (elements == 0 || !(length > 0.0))
            throw ConfigError("mesh needs elements > 0 and length > 0");
        const json load = j.value("loading", json::object());
        fem::Loading loading;
        loading.body = detail::get_or(load, "body", 0.0);
        loading.traction = detail::get_or(load, "traction", 0.0);
        const std::string rule = detail::get_or<std::string>(load, "rule", "consistent");
        if (rule == "consistent")
            loading.rule = fem::BodyLoadRule::Consistent;
        else if (rule == "element-length")
            loading.rule = fem::BodyLoadRule::ElementLengthPerNode;
        else
            throw ConfigError("loading rule must be 'consistent' or 'element-length'");
        return fem::ForwardProblem(fem::Mesh1D::uniform(elements, length), mat, loading);
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

struct ForwardConfig {
    fem::ForwardProblem problem;
    std::string method = "nr";  // "nr" or "enr"
    double phi = 1.0;
    double jitter_scale = 1e-3;
    bool track_c = true;
    Tolerances tol = fem::forward_tolerances();
};

inline ForwardConfig parse_forward_config(const json& j)
{
    ForwardConfig cfg{parse_forward_problem(j)};
    try {
        const json m = j.value("method", json::object());
        cfg.method = detail::get_or<std::string>(m, "name", "nr");
        if (cfg.method != "nr" && cfg.method != "enr")
            throw ConfigError("method name must be 'nr' or 'enr'");
        cfg.phi = detail::get_or(m, "phi", cfg.phi);
        cfg.jitter_scale = detail::get_or(m, "jitter", cfg.jitter_scale);
        const std::string update = detail::get_or<std::string>(m, "c_update", "iterate");
        if (update != "iterate" && update != "initial")
            throw ConfigError("c_update must be 'iterate' or 'initial'");
        cfg.track_c = update == "iterate";
        if (j.contains("tolerances"))
            cfg.tol = parse_tolerances(j.at("tolerances"), cfg.tol);
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

inline fem::ForwardMethod forward_method(const ForwardConfig& cfg, RngSeed seed)
{
    if (cfg.method == "nr")
        return fem::NewtonMethod{};
    if (cfg.track_c)
        return fem::enr_with_phi(cfg.problem, cfg.phi, seed, cfg.jitter_scale);
    return fem::enr_with_fixed_phi(cfg.problem, cfg.phi, seed, cfg.jitter_scale);
}

struct PhiSweepConfig {
    fem::ForwardProblem problem;
    double start = 0.1;
    double stop = 10.0;
    double step = 0.1;
    Tolerances tol = fem::forward_tolerances();
};

inline PhiSweepConfig parse_phisweep_config(const json& j)
{
    PhiSweepConfig cfg{parse_forward_problem(j)};
    try {
        const json p = j.value("phi", json::object());
        cfg.start = detail::get_or(p, "start", cfg.start);
        cfg.stop = detail::get_or(p, "stop", cfg.stop);
        cfg.step = detail::get_or(p, "step", cfg.step);
        if (!(cfg.step > 0.0) || cfg.stop < cfg.start)
            throw ConfigError("phi needs step > 0 and stop >= start");
        if (j.contains("tolerances"))
            cfg.tol = parse_tolerances(j.at("tolerances"), cfg.tol);
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

inline void write_phisweep_csv(std::ostream& os, const std::vector<fem::PhiSweepRow>& rows)
{
    os << "phi,status,iterations,length\n";
    for (const auto& r : rows)
        os << fmt9(r.phi) << ',' << to_string(r.status) << ',' << r.iterations << ','
           << (r.length ? fmt9(*r.length) : std::string()) << '\n';
}

struct InverseConfig {
    fem::MaterialFamily family = fem::MaterialFamily::VerondaWestmann;
    Vector true_params;
    Vector theta0;
    Interval stretch_range{2.0, 10.0};
    std::size_t samples = 10;
    std::optional<double> snr_db;
    Tolerances tol = fit_tolerances();
};

inline InverseConfig parse_inverse_config(const json& j)
{
    InverseConfig cfg;
    try {
        const fem::MaterialModel truth = parse_material(j.at("material"));
        cfg.true_params = fem::material_params(truth);
        cfg.family = std::holds_alternative<fem::LinearElastic>(truth)    ? fem::MaterialFamily::Linear
                     : std::holds_alternative<fem::MooneyRivlin>(truth) ? fem::MaterialFamily::MooneyRivlin
                                                                        : fem::MaterialFamily::VerondaWestmann;
        if (!j.contains("theta0"))
            throw ConfigError("config needs 'theta0'");
        cfg.theta0 = detail::parse_vector(j.at("theta0"), "theta0");
        if (cfg.theta0.size() != cfg.true_params.size())
            throw ConfigError("theta0 has the wrong number of parameters");
        if (j.contains("stretch_range"))
            cfg.stretch_range = detail::parse_interval(j.at("stretch_range"), "stretch_range");
        if (!(cfg.stretch_range.lo > 0.0) || !(cfg.stretch_range.hi > cfg.stretch_range.lo))
            throw ConfigError("stretch_range must satisfy 0 < lo < hi");
        cfg.samples = detail::get_or<std::size_t>(j, "samples", cfg.samples);
        if (cfg.samples < cfg.true_params.size())
            throw ConfigError("too few samples for the parameter count");
        if (j.contains("snr_db"))
            cfg.snr_db = detail::parse_snr(j.at("snr_db"));
        if (j.contains("tolerances"))
            cfg.tol = parse_tolerances(j.at("tolerances"), cfg.tol);
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

struct InverseRun {
    FitMethod method;
    FitTrace trace;
};

// Synthetic (stretch, stress) data from an LHS design over the stretch
// range, then GN and CGN fits from the same start.
inline std::vector<InverseRun> inverse_experiment(const InverseConfig& cfg, RngSeed seed)
{
    FitModel model = fem::inverse_model(cfg.family);
    model.true_params = cfg.true_params;
    const std::array<Interval, 1> range{cfg.stretch_range};
    const Observations obs = generate_observations(model, range, cfg.samples, cfg.snr_db, seed);
    std::vector<InverseRun> runs;
    for (FitMethod m : {FitMethod::GaussNewton, FitMethod::CorrectedGaussNewton})
        runs.push_back({m, fit(m, model, obs, cfg.theta0, cfg.tol)});
    return runs;
}

inline void write_inverse_csv(std::ostream& os, const std::vector<InverseRun>& runs)
{
    os << "method,n,sse,theta\n";
    for (const auto& r : runs)
        for (std::size_t n = 0; n < r.trace.iterates.size(); ++n) {
            os << method_name(r.method) << ',' << n << ',' << fmt9(r.trace.sse[n]) << ',';
            const Vector& th = r.trace.iterates[n];
            for (std::size_t k = 0; k < th.size(); ++k)
                os << (k ? ";" : "") << fmt9(th[k]);
            os << '\n';
        }
}

} // namespace nonlin::experiments
