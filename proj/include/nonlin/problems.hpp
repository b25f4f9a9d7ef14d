#pragma once

// Benchmark systems and fit models with analytic derivatives and
// ground-truth roots / parameters, addressable by name.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "minimize.hpp"
#include "numkit.hpp"
#include "rootfind.hpp"

namespace nonlin {

class UnknownProblem : public std::invalid_argument {
public:
    explicit UnknownProblem(const std::string& name) : std::invalid_argument("unknown problem: " + name) {}
};

// f1 = x0^3 - 3 x0 x1^2 - 1, f2 = 3 x0^2 x1 - x1^3  (the cube roots of unity)
inline ProblemSystem system_rf5()
{
    ProblemSystem s;
    s.name = "rf5";
    s.dim = 2;
    s.residual = [](const Vector& x) {
        return Vector{x[0] * x[0] * x[0] - 3.0 * x[0] * x[1] * x[1] - 1.0,
                      3.0 * x[0] * x[0] * x[1] - x[1] * x[1] * x[1]};
    };
    s.analytic_jacobian = [](const Vector& x) {
        Matrix j(2, 2);
        j(0, 0) = 3.0 * x[0] * x[0] - 3.0 * x[1] * x[1];
        j(0, 1) = -6.0 * x[0] * x[1];
        j(1, 0) = 6.0 * x[0] * x[1];
        j(1, 1) = 3.0 * x[0] * x[0] - 3.0 * x[1] * x[1];
        return j;
    };
    const double h = std::sqrt(3.0) / 2.0;
    s.known_roots = {{-0.5, h}, {1.0, 0.0}, {-0.5, -h}};
    return s;
}

// f1 = e^x0 - x1, f2 = x0 x1 - e^x0
inline ProblemSystem system_exp()
{
    ProblemSystem s;
    s.name = "exp";
    s.dim = 2;
    s.residual = [](const Vector& x) {
        const double e = std::exp(x[0]);
        return Vector{e - x[1], x[0] * x[1] - e};
    };
    s.analytic_jacobian = [](const Vector& x) {
        const double e = std::exp(x[0]);
        Matrix j(2, 2);
        j(0, 0) = e;
        j(0, 1) = -1.0;
        j(1, 0) = x[1] - e;
        j(1, 1) = x[0];
        return j;
    };
    s.known_roots = {{1.0, std::numbers::e}};
    return s;
}

// f1 = x0^2 - 1/x0 + x1, f2 = 1/x1 + x0
inline ProblemSystem system_negexp()
{
    ProblemSystem s;
    s.name = "negexp";
    s.dim = 2;
    s.residual = [](const Vector& x) {
        if (x[0] == 0.0 || x[1] == 0.0)
            throw DomainError("negexp evaluated on a coordinate axis");
        return Vector{x[0] * x[0] - 1.0 / x[0] + x[1], 1.0 / x[1] + x[0]};
    };
    s.analytic_jacobian = [](const Vector& x) {
        if (x[0] == 0.0 || x[1] == 0.0)
            throw DomainError("negexp evaluated on a coordinate axis");
        Matrix j(2, 2);
        j(0, 0) = 2.0 * x[0] + 1.0 / (x[0] * x[0]);
        j(0, 1) = 1.0;
        j(1, 0) = 1.0;
        j(1, 1) = -1.0 / (x[1] * x[1]);
        return j;
    };
    // x0^3 = 2 at the root, x1 = -1/x0
    const double r = std::cbrt(2.0);
    s.known_roots = {{r, -1.0 / r}};
    return s;
}

// f(x) = x^3 + x^2 - 2x with roots {-2, 0, 1}
inline ProblemSystem scalar_cubic()
{
    ProblemSystem s;
    s.name = "cubic";
    s.dim = 1;
    s.residual = [](const Vector& x) { return Vector{x[0] * x[0] * x[0] + x[0] * x[0] - 2.0 * x[0]}; };
    s.analytic_jacobian = [](const Vector& x) {
        Matrix j(1, 1);
        j(0, 0) = 3.0 * x[0] * x[0] + 2.0 * x[0] - 2.0;
        return j;
    };
    s.known_roots = {{-2.0}, {0.0}, {1.0}};
    return s;
}

inline ProblemSystem find_system(std::string_view name)
{
    if (name == "rf5")
        return system_rf5();
    if (name == "exp")
        return system_exp();
    if (name == "negexp")
        return system_negexp();
    if (name == "cubic")
        return scalar_cubic();
    throw UnknownProblem(std::string(name));
}

// ---------------------------------------------------------------------------
// Fit models

struct ModelRegistryEntry {
    std::string name;
    FitModel model;
    std::vector<Interval> sampling_range;
};

namespace detail {

// Real part of the principal value of x^e, with its first two derivatives
// with respect to e. Equals plain pow for x > 0.
struct RealPower {
    double value, d1, d2;
};

inline RealPower real_power(double x, double e)
{
    if (x > 0.0) {
        const double v = std::pow(x, e);
        const double l = std::log(x);
        return {v, v * l, v * l * l};
    }
    if (x == 0.0)
        return {e > 0.0 ? 0.0 : (e == 0.0 ? 1.0 : INFINITY), 0.0, 0.0};
    const double a = std::pow(-x, e);
    const double l = std::log(-x);
    const double pi = std::numbers::pi;
    const double c = std::cos(pi * e), s = std::sin(pi * e);
    return {a * c, a * (l * c - pi * s), a * (l * l * c - 2.0 * pi * l * s - pi * pi * c)};
}

} // namespace detail

// theta0 x^3 + theta1 x^2 + theta2 x + theta3 + theta4 sin x
inline ModelRegistryEntry model_gn1()
{
    FitModel m;
    m.name = "gn1";
    m.param_count = 5;
    m.input_dims = 1;
    m.eval = [](Inputs x, Params t) {
        const double v = x[0];
        return t[0] * v * v * v + t[1] * v * v + t[2] * v + t[3] + t[4] * std::sin(v);
    };
    m.gradient = [](Inputs x, Params) {
        const double v = x[0];
        return Vector{v * v * v, v * v, v, 1.0, std::sin(v)};
    };
    m.hessian = [](Inputs, Params) { return Matrix(5, 5); };
    m.true_params = Vector{-0.001, 0.1, 0.1, 2.0, 15.0};
    return {"gn1", m, {{1.0, 10.0}}};
}

// theta0^3 x^3 + theta1^2 x^2 + theta2^2 x + theta3^3 + theta4 sin x
inline ModelRegistryEntry model_gn2()
{
    FitModel m;
    m.name = "gn2";
    m.param_count = 5;
    m.input_dims = 1;
    m.eval = [](Inputs x, Params t) {
        const double v = x[0];
        return t[0] * t[0] * t[0] * v * v * v + t[1] * t[1] * v * v + t[2] * t[2] * v + t[3] * t[3] * t[3] +
               t[4] * std::sin(v);
    };
    m.gradient = [](Inputs x, Params t) {
        const double v = x[0];
        return Vector{3.0 * t[0] * t[0] * v * v * v, 2.0 * t[1] * v * v, 2.0 * t[2] * v, 3.0 * t[3] * t[3],
                      std::sin(v)};
    };
    m.hessian = [](Inputs x, Params t) {
        const double v = x[0];
        Matrix h(5, 5);
        h(0, 0) = 6.0 * t[0] * v * v * v;
        h(1, 1) = 2.0 * v * v;
        h(2, 2) = 2.0 * v;
        h(3, 3) = 6.0 * t[3];
        return h;
    };
    m.true_params = Vector{-0.001, 0.1, 0.1, 2.0, 15.0};
    return {"gn2", m, {{1.0, 10.0}}};
}

// theta0 x0^theta1 + theta2 x1^theta3, real part for negative bases
inline ModelRegistryEntry model_gn3()
{
    FitModel m;
    m.name = "gn3";
    m.param_count = 4;
    m.input_dims = 2;
    m.eval = [](Inputs x, Params t) {
        return t[0] * detail::real_power(x[0], t[1]).value + t[2] * detail::real_power(x[1], t[3]).value;
    };
    m.gradient = [](Inputs x, Params t) {
        const auto a = detail::real_power(x[0], t[1]);
        const auto b = detail::real_power(x[1], t[3]);
        return Vector{a.value, t[0] * a.d1, b.value, t[2] * b.d1};
    };
    m.hessian = [](Inputs x, Params t) {
        const auto a = detail::real_power(x[0], t[1]);
        const auto b = detail::real_power(x[1], t[3]);
        Matrix h(4, 4);
        h(0, 1) = h(1, 0) = a.d1;
        h(1, 1) = t[0] * a.d2;
        h(2, 3) = h(3, 2) = b.d1;
        h(3, 3) = t[2] * b.d2;
        return h;
    };
    m.true_params = Vector{0.1, 4.0, 0.1, 2.0};
    return {"gn3", m, {{1.0, 10.0}, {1.0, 10.0}}};
}

// theta0 exp(-x0/theta1) + theta2 exp(-x1/theta3)
inline ModelRegistryEntry model_gn4()
{
    FitModel m;
    m.name = "gn4";
    m.param_count = 4;
    m.input_dims = 2;
    m.eval = [](Inputs x, Params t) { return t[0] * std::exp(-x[0] / t[1]) + t[2] * std::exp(-x[1] / t[3]); };
    m.gradient = [](Inputs x, Params t) {
        const double e1 = std::exp(-x[0] / t[1]);
        const double e3 = std::exp(-x[1] / t[3]);
        return Vector{e1, t[0] * e1 * x[0] / (t[1] * t[1]), e3, t[2] * e3 * x[1] / (t[3] * t[3])};
    };
    m.hessian = [](Inputs x, Params t) {
        const double e1 = std::exp(-x[0] / t[1]);
        const double e3 = std::exp(-x[1] / t[3]);
        Matrix h(4, 4);
        h(0, 1) = h(1, 0) = e1 * x[0] / (t[1] * t[1]);
        h(1, 1) = t[0] * e1 * (x[0] * x[0] / std::pow(t[1], 4) - 2.0 * x[0] / std::pow(t[1], 3));
        h(2, 3) = h(3, 2) = e3 * x[1] / (t[3] * t[3]);
        h(3, 3) = t[2] * e3 * (x[1] * x[1] / std::pow(t[3], 4) - 2.0 * x[1] / std::pow(t[3], 3));
        return h;
    };
    m.true_params = Vector{4.0, 2.0, 1.0, 10.0};
    return {"gn4", m, {{0.1, 10.0}, {0.1, 10.0}}};
}

inline std::vector<ModelRegistryEntry> models_gn()
{
    return {model_gn1(), model_gn2(), model_gn3(), model_gn4()};
}

// ---------------------------------------------------------------------------
// Cantilever beam: y(x) = P x^2 (3L - x) / (6 E I), tip load P.
// The parameter I is in cm^4, x in m, and the deflection is returned in mm.

struct BeamProperties {
    double modulus_pa = 200e9;
    double length_m = 2.0;
    double load_n = 10e3;
};

class NonPositiveParameter : public DomainError {
public:
    NonPositiveParameter() : DomainError("second moment of area must be positive") {}
};

inline FitModel beam_model(BeamProperties props = {})
{
    FitModel m;
    m.name = "beam";
    m.param_count = 1;
    m.input_dims = 1;
    auto shape = [props](double x) {
        // m^3 * N / Pa = m^4; divide by I [m^4], report mm
        return props.load_n * x * x * (3.0 * props.length_m - x) / (6.0 * props.modulus_pa) * 1e3 / 1e-8;
    };
    m.eval = [shape](Inputs x, Params t) {
        if (!(t[0] > 0.0))
            throw NonPositiveParameter();
        return shape(x[0]) / t[0];
    };
    m.gradient = [shape](Inputs x, Params t) {
        if (!(t[0] > 0.0))
            throw NonPositiveParameter();
        return Vector{-shape(x[0]) / (t[0] * t[0])};
    };
    m.hessian = [shape](Inputs x, Params t) {
        if (!(t[0] > 0.0))
            throw NonPositiveParameter();
        Matrix h(1, 1);
        h(0, 0) = 2.0 * shape(x[0]) / (t[0] * t[0] * t[0]);
        return h;
    };
    m.true_params = Vector{2340.0};
    return m;
}

// The five measured deflections used for the worked GN example.
inline Observations beam_observations()
{
    Observations obs;
    obs.inputs = {{0.0}, {0.5}, {1.0}, {1.5}, {2.0}};
    obs.outputs = {0.000, 0.490, 1.781, 3.606, 5.698};
    return obs;
}

inline ModelRegistryEntry find_model(std::string_view name)
{
    if (name == "gn1")
        return model_gn1();
    if (name == "gn2")
        return model_gn2();
    if (name == "gn3")
        return model_gn3();
    if (name == "gn4")
        return model_gn4();
    if (name == "beam")
        return {"beam", beam_model(), {{0.0, 2.0}}};
    throw UnknownProblem(std::string(name));
}

inline bool is_system_name(std::string_view name)
{
    return name == "rf5" || name == "exp" || name == "negexp" || name == "cubic";
}

inline bool is_model_name(std::string_view name)
{
    return name == "gn1" || name == "gn2" || name == "gn3" || name == "gn4" || name == "beam";
}

} // namespace nonlin
