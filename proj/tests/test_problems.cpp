#include <gtest/gtest.h>

#include <cmath>

#include "nonlin/problems.hpp"
#include "test_util.hpp"

using namespace nonlin;
using nonlin::testing::max_rel_diff;

TEST(Systems, Rf5Values)
{
    const ProblemSystem s = system_rf5();
    EXPECT_EQ(s(Vector{2.0, 2.0}), (Vector{-17.0, 16.0}));
    EXPECT_EQ(s(Vector{4.0, 4.0}), (Vector{-129.0, 128.0}));
}

TEST(Systems, ExpValues)
{
    const Vector f = system_exp()(Vector{0.0, 3.0});
    EXPECT_DOUBLE_EQ(f[0], -2.0);
    EXPECT_DOUBLE_EQ(f[1], -1.0);
}

TEST(Systems, NegexpValuesAndAxes)
{
    const ProblemSystem s = system_negexp();
    const Vector f = s(Vector{2.0, -4.0});
    EXPECT_DOUBLE_EQ(f[0], 4.0 - 0.5 - 4.0);
    EXPECT_DOUBLE_EQ(f[1], -0.25 + 2.0);
    EXPECT_THROW(s(Vector{0.0, 1.0}), DomainError);
    EXPECT_THROW(s(Vector{1.0, 0.0}), DomainError);
}

TEST(Systems, KnownRootsAreRoots)
{
    for (const char* name : {"rf5", "exp", "negexp", "cubic"}) {
        const ProblemSystem s = find_system(name);
        ASSERT_FALSE(s.known_roots.empty());
        for (const auto& r : s.known_roots) {
            ASSERT_EQ(r.size(), s.dim);
            EXPECT_LE(norm2(s(r)), 1e-14) << name;
        }
    }
}

TEST(Systems, Rf5RootsPrintToThreeDecimals)
{
    const auto roots = system_rf5().known_roots;
    EXPECT_NEAR(roots[0][1], 0.866, 5e-4);
    EXPECT_NEAR(roots[2][1], -0.866, 5e-4);
}

TEST(SystemsProperty, AnalyticJacobianMatchesFiniteDifference)
{
    Rng rng(RngSeed{31});
    for (const char* name : {"rf5", "exp", "negexp", "cubic"}) {
        const ProblemSystem s = find_system(name);
        for (int k = 0; k < 50; ++k) {
            Vector x(s.dim);
            for (double& v : x)
                v = rng.uniform(0.2, 3.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            const Matrix a = s.jacobian(x);
            const Matrix f = fd_jacobian(s.residual, x);
            EXPECT_LE(max_rel_diff(a, f), 1e-7) << name;
        }
    }
}

TEST(Registry, Lookup)
{
    EXPECT_THROW(find_system("nosuch"), UnknownProblem);
    EXPECT_THROW(find_model("nosuch"), std::invalid_argument);
    EXPECT_TRUE(is_system_name("negexp"));
    EXPECT_FALSE(is_system_name("gn1"));
    EXPECT_TRUE(is_model_name("beam"));
    EXPECT_FALSE(is_model_name("rf5"));
    for (const auto& e : models_gn()) {
        EXPECT_EQ(find_model(e.name).model.param_count, e.model.param_count);
        EXPECT_EQ(e.sampling_range.size(), e.model.input_dims);
    }
}

TEST(Models, Values)
{
    const auto gn1 = model_gn1().model;
    const Vector x{2.0};
    const Vector t{-0.001, 0.1, 0.1, 2.0, 15.0};
    EXPECT_NEAR(gn1.eval(x, t), -0.008 + 0.4 + 0.2 + 2.0 + 15.0 * std::sin(2.0), 1e-14);
    const auto gn2 = model_gn2().model;
    EXPECT_NEAR(gn2.eval(x, t), -1e-9 * 8.0 + 0.04 + 0.02 + 8.0 + 15.0 * std::sin(2.0), 1e-14);
    const auto gn3 = model_gn3().model;
    EXPECT_NEAR(gn3.eval(Vector{2.0, 3.0}, Vector{0.1, 4.0, 0.1, 2.0}), 1.6 + 0.9, 1e-14);
    const auto gn4 = model_gn4().model;
    EXPECT_NEAR(gn4.eval(Vector{2.0, 10.0}, Vector{4.0, 2.0, 1.0, 10.0}), 5.0 * std::exp(-1.0), 1e-14);
}

TEST(Models, RealPowerMatchesPowForPositiveBase)
{
    Rng rng(RngSeed{2});
    for (int k = 0; k < 100; ++k) {
        const double x = rng.uniform(0.01, 20.0);
        const double e = rng.uniform(-3.0, 5.0);
        EXPECT_DOUBLE_EQ(detail::real_power(x, e).value, std::pow(x, e));
    }
    // (-8)^(1/3) principal value has real part 1
    EXPECT_NEAR(detail::real_power(-8.0, 1.0 / 3.0).value, 1.0, 1e-14);
    EXPECT_NEAR(detail::real_power(-2.0, 2.0).value, 4.0, 1e-13);
}

TEST(Beam, DeflectionOracle)
{
    const FitModel m = beam_model();
    EXPECT_NEAR(m.eval(Vector{2.0}, Vector{2340.0}), 5.6980056980056980, 1e-12);
    EXPECT_EQ(m.eval(Vector{0.0}, Vector{2340.0}), 0.0);
    EXPECT_THROW(m.eval(Vector{1.0}, Vector{0.0}), NonPositiveParameter);
}

TEST(Beam, MeasuredDataNearModel)
{
    const FitModel m = beam_model();
    const Observations obs = beam_observations();
    for (std::size_t i = 0; i < obs.size(); ++i)
        EXPECT_NEAR(obs.outputs[i], m.eval(obs.inputs[i], Vector{2340.0}), 1e-3);
}
