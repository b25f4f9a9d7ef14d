#include <gtest/gtest.h>

#include <cstdint>
#include <fstream>
#include <sstream>

#include "nonlin/experiments.hpp"

using namespace nonlin;
using namespace nonlin::experiments;

namespace {

std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

BasinConfig rf5_nr(std::size_t res, unsigned threads = 1)
{
    BasinConfig cfg;
    cfg.nx = cfg.ny = res;
    cfg.threads = threads;
    return cfg;
}

BasinGrid tiny_grid(std::vector<int> status, std::vector<int> iters)
{
    BasinGrid g;
    g.nx = g.ny = 2;
    g.max_iters = 100;
    g.status = std::move(status);
    g.iters = std::move(iters);
    return g;
}

std::string ppm_pixels(const BasinGrid& g)
{
    std::ostringstream os;
    render_ppm(os, g);
    const std::string s = os.str();
    const std::string header = "P6\n2 2\n255\n";
    EXPECT_EQ(s.substr(0, header.size()), header);
    return s.substr(header.size());
}

} // namespace

TEST(Ppm, ConvergedCellsUsePalette)
{
    // zero iterations gives the pure palette colour
    const std::string px = ppm_pixels(tiny_grid({0, 1, 2, 0}, {0, 0, 0, 0}));
    ASSERT_EQ(px.size(), 12u);
    const auto& pal = default_palette();
    // top image row is j = 1: cells (0,1) = root 2, (1,1) = root 0
    const Rgb expected[] = {pal[2], pal[0], pal[0], pal[1]};
    for (int p = 0; p < 4; ++p)
        for (int c = 0; c < 3; ++c)
            EXPECT_EQ(static_cast<unsigned char>(px[p * 3 + c]), expected[p][c]) << p;
}

TEST(Ppm, CappedCellsAreWhiteDivergedBlack)
{
    const std::string capped = ppm_pixels(tiny_grid({-1, -1, -1, -1}, {100, 100, 100, 100}));
    for (char c : capped)
        EXPECT_EQ(static_cast<unsigned char>(c), 255);
    const std::string diverged = ppm_pixels(tiny_grid({-2, -2, -2, -2}, {3, 3, 3, 3}));
    for (char c : diverged)
        EXPECT_EQ(static_cast<unsigned char>(c), 0);
}

TEST(Ppm, FadesWithIterations)
{
    const Rgb base = default_palette()[1];
    const Rgb at_cap = cell_colour(1, 100, 100, default_palette());
    for (int c = 0; c < 3; ++c)
        EXPECT_EQ(at_cap[c], std::lround(base[c] + (255.0 - base[c]) * 0.9));
    EXPECT_EQ(cell_colour(status_code::unmatched, 5, 100, default_palette()), unmatched_colour);
}

TEST(Basin, Rf5NewtonGoldenImage)
{
    const BasinGrid g = basin_map(rf5_nr(128));
    std::ostringstream os;
    render_ppm(os, g);
    // frozen from this implementation's first 128 x 128 render
    EXPECT_EQ(fnv1a(os.str()), 331292647981422701ull);
}

TEST(Basin, Rf5NewtonCoversTheRange)
{
    const BasinGrid g = basin_map(rf5_nr(64));
    const GridReport r = grid_report(g, 3);
    EXPECT_DOUBLE_EQ(r.coverage_percent, 100.0);
    EXPECT_EQ(r.per_root.size(), 3u);
    for (std::size_t n : r.per_root)
        EXPECT_GT(n, 0u);
}

TEST(BasinProperty, ThreadCountDoesNotChangeOutput)
{
    for (const char* problem : {"rf5", "negexp"}) {
        BasinConfig a = rf5_nr(48, 1);
        a.problem = problem;
        BasinConfig b = a;
        b.threads = 4;
        std::ostringstream sa, sb;
        write_grid_csv(sa, basin_map(a));
        write_grid_csv(sb, basin_map(b));
        EXPECT_EQ(sa.str(), sb.str()) << problem;
    }
}

TEST(BasinProperty, CoverageStableUnderResolution)
{
    const double c64 = grid_report(basin_map(rf5_nr(64, 0)), 3).coverage_percent;
    const double c128 = grid_report(basin_map(rf5_nr(128, 0)), 3).coverage_percent;
    EXPECT_LT(std::abs(c64 - c128), 1.0) << c64 << " vs " << c128;
}

TEST(BasinProperty, EveryCellClassified)
{
    BasinConfig cfg = rf5_nr(40, 0);
    cfg.problem = "exp";
    cfg.method = RootMethod::Extended;
    cfg.policy = ScaleAll{0.5};
    const BasinGrid g = basin_map(cfg);
    ASSERT_EQ(g.status.size(), 1600u);
    const GridReport r = grid_report(g, 1);
    std::size_t total = r.unmatched + r.max_iters + r.diverged;
    for (std::size_t n : r.per_root)
        total += n;
    EXPECT_EQ(total, r.cells);
    for (std::size_t k = 0; k < g.status.size(); ++k) {
        EXPECT_GE(g.status[k], -3);
        EXPECT_LE(g.status[k], 0);
        EXPECT_GE(g.iters[k], 0);
        EXPECT_LE(g.iters[k], 100);
    }
}

TEST(Basin, ReportCsv)
{
    const GridReport r = grid_report(tiny_grid({0, -1, -2, -3}, {4, 100, 2, 6}), 1);
    std::ostringstream os;
    write_report_csv(os, r);
    EXPECT_EQ(os.str(), "metric,value\ncells,4\ncoverage_percent,25\nconverged_percent,50\nroot_0,1\n"
                        "unmatched,1\nmax_iters,1\ndiverged,1\nmean_iterations,5\n");
}

TEST(Basin, MatchRootPicksNearestWithinRadius)
{
    const std::vector<Vector> roots{{0.0, 0.0}, {1.0, 0.0}};
    EXPECT_EQ(match_root(roots, Vector{0.004, 0.0}, 1e-2), 0);
    EXPECT_EQ(match_root(roots, Vector{0.995, 0.0}, 1e-2), 1);
    EXPECT_EQ(match_root(roots, Vector{0.5, 0.0}, 1e-2), -1);
}

TEST(Config, BasinParsing)
{
    const json j = json::parse(R"({"problem": "exp", "method": "enr",
        "c_policy": {"kind": "per_axis", "phi": [3, 2]}, "resolution": [16, 8]})");
    const BasinConfig cfg = parse_basin_config(j);
    EXPECT_EQ(cfg.problem, "exp");
    EXPECT_EQ(cfg.method, RootMethod::Extended);
    EXPECT_EQ(cfg.nx, 16u);
    EXPECT_EQ(cfg.ny, 8u);
    ASSERT_TRUE(cfg.policy.has_value());
    EXPECT_EQ(std::get<ScalePerAxis>(*cfg.policy).phi, (Vector{3.0, 2.0}));
}

TEST(Config, Errors)
{
    EXPECT_THROW(parse_basin_config(json::parse(R"({"problem": "nosuch"})")), ConfigError);
    EXPECT_THROW(parse_basin_config(json::parse(R"({"method": "enr"})")), ConfigError);
    EXPECT_THROW(parse_basin_config(json::parse(R"({"resolution": 0})")), ConfigError);
    EXPECT_THROW(parse_basin_config(json::parse(R"({"resolution": "big"})")), ConfigError);
    EXPECT_THROW(parse_mingrid_config(json::parse(R"({"model": "gn9"})")), ConfigError);
    EXPECT_THROW(parse_material(json::parse(R"({"model": "rubber"})")), ConfigError);
    EXPECT_THROW(parse_material(json::parse(R"({"model": "linear", "E": -1})")), ConfigError);
    EXPECT_THROW(load_json("/nonexistent/config.json"), ConfigError);
}

TEST(Config, ShippedConfigsParse)
{
    const std::string dir = NONLIN_CONFIG_DIR;
    for (const char* f : {"rf5_nr", "rf5_enr_2x", "rf5_enr_offset", "exp_nr", "exp_enr_half", "exp_enr_const",
                          "negexp_nr", "negexp_enr_axis"})
        EXPECT_NO_THROW(parse_basin_config(load_json(dir + "/" + f + ".json"))) << f;
    for (const char* f : {"le_nr", "le_enr", "vw5", "vw5_nr", "vw20", "mr5", "mr5_nr", "mr20"})
        EXPECT_NO_THROW(parse_forward_config(load_json(dir + "/" + f + ".json"))) << f;
    EXPECT_NO_THROW(parse_mingrid_config(load_json(dir + "/gn2_grid.json")));
    EXPECT_NO_THROW(parse_rate_order_config(load_json(dir + "/gn2_rateorder.json")));
    EXPECT_NO_THROW(parse_phisweep_config(load_json(dir + "/phisweep_mr20.json")));
    EXPECT_NO_THROW(parse_inverse_config(load_json(dir + "/inverse_vw.json")));
}

TEST(MinGrid, LinearModelTakesOneStepForBothMethods)
{
    MinGridConfig cfg;
    cfg.model = "gn1";
    cfg.distances = {1.0, 10.0, 100.0};
    cfg.snr_db = {std::nullopt};
    cfg.repetitions = 2;
    cfg.threads = 1;
    const auto grids = minimisation_grid(cfg);
    ASSERT_EQ(grids.size(), 2u);
    // one step lands on the solution, a second confirms it
    for (const auto& g : grids)
        for (std::size_t d = 0; d < 3; ++d) {
            ASSERT_TRUE(g.at(0, d).has_value());
            EXPECT_LE(*g.at(0, d), 2.0);
        }
    EXPECT_EQ(grids[0].mean_steps, grids[1].mean_steps);
}

TEST(MinGridProperty, DeterministicAcrossThreads)
{
    MinGridConfig cfg;
    cfg.distances = log_spaced(1.0, 100.0, 3);
    cfg.snr_db = {std::nullopt, 40.0};
    cfg.repetitions = 2;
    cfg.threads = 1;
    std::ostringstream a, b;
    write_mingrid_csv(a, minimisation_grid(cfg));
    cfg.threads = 3;
    write_mingrid_csv(b, minimisation_grid(cfg));
    EXPECT_EQ(a.str(), b.str());
}

TEST(MinGrid, LogSpacing)
{
    const auto v = log_spaced(1.0, 100.0, 5);
    ASSERT_EQ(v.size(), 5u);
    EXPECT_DOUBLE_EQ(v[0], 1.0);
    EXPECT_NEAR(v[1], 3.1622776601683795, 1e-14);
    EXPECT_NEAR(v[4], 100.0, 1e-12);
    EXPECT_THROW(log_spaced(0.0, 1.0, 3), std::invalid_argument);
}

TEST(RateOrder, CsvRowsMatchEstimates)
{
    RateOrderConfig cfg;
    const RateOrderReport rep = rate_order_report(cfg);
    ASSERT_EQ(rep.series.size(), 2u);
    std::ostringstream os;
    write_rate_order_csv(os, rep);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "method,n,error,q,mu");
    std::size_t rows = 0;
    while (std::getline(is, line))
        ++rows;
    EXPECT_EQ(rows, rep.series[0].estimate.order_q.size() + rep.series[1].estimate.order_q.size());
    for (const auto& s : rep.series) {
        EXPECT_TRUE(s.trace.status.converged());
        EXPECT_EQ(s.estimate.order_q.size() + 2, s.errors.size());
    }
}

TEST(Beam, Table)
{
    const auto rows = beam_table();
    ASSERT_EQ(rows.size(), 4u);
    std::ostringstream os;
    write_beam_csv(os, rows);
    EXPECT_EQ(os.str(), "iteration,theta_cm4,step_cm4\n"
                        "0,2000.000,290.5415\n"
                        "1,2290.541,48.3386\n"
                        "2,2338.880,1.0416\n"
                        "3,2339.922,0.0005\n");
}

TEST(Fem, PhiSweepCsv)
{
    std::vector<fem::PhiSweepRow> rows{{0.1, SolveStatus::ok(), 6, 0.97},
                                       {0.2, SolveStatus::capped(), 100, std::nullopt}};
    std::ostringstream os;
    write_phisweep_csv(os, rows);
    EXPECT_EQ(os.str(), "phi,status,iterations,length\n0.1,converged,6,0.97\n0.2,max-iters,100,\n");
}

TEST(Fem, InverseExperimentRecoversVw)
{
    const auto cfg = parse_inverse_config(load_json(std::string(NONLIN_CONFIG_DIR) + "/inverse_vw.json"));
    const auto runs = inverse_experiment(cfg, RngSeed{1});
    ASSERT_EQ(runs.size(), 2u);
    for (const auto& r : runs) {
        ASSERT_TRUE(r.trace.status.converged());
        EXPECT_NEAR(r.trace.final_iterate()[0], 2.48446, 1e-4);
        EXPECT_NEAR(r.trace.final_iterate()[1], 0.16860, 1e-5);
    }
}

TEST(ParallelFor, VisitsEachIndexOnceAndRethrows)
{
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t k) { hits[k] += 1; });
    for (int h : hits)
        EXPECT_EQ(h, 1);
    EXPECT_THROW(parallel_for(10, 3,
                              [](std::size_t k) {
                                  if (k == 7)
                                      throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
}
