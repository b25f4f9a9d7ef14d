#pragma once

// Total-Lagrangian finite elements for a 1D bar: two-node linear elements,
// hyperelastic constitutive laws, force assembly, forward solves through
// the root finders and inverse (parameter fitting) adapters.
//
// Units are whatever the caller uses consistently; the examples use metres
// and MPa. Cross-sectional area is 1.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "minimize.hpp"
#include "numkit.hpp"
#include "rootfind.hpp"

namespace nonlin::fem {

class NonPositiveStretch : public DomainError {
public:
    explicit NonPositiveStretch(double lambda)
        : DomainError("non-positive stretch " + std::to_string(lambda))
    {
    }
};

class InvalidMaterial : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Mesh

struct Mesh1D {
    std::vector<double> ref_nodes;

    explicit Mesh1D(std::vector<double> nodes) : ref_nodes(std::move(nodes))
    {
        if (ref_nodes.size() < 2)
            throw std::invalid_argument("mesh needs at least two nodes");
        for (std::size_t i = 1; i < ref_nodes.size(); ++i)
            if (!(ref_nodes[i] > ref_nodes[i - 1]))
                throw std::invalid_argument("mesh nodes must be strictly increasing");
    }

    static Mesh1D uniform(std::size_t n_elems, double length, double origin = 0.0)
    {
        if (n_elems == 0 || !(length > 0.0))
            throw std::invalid_argument("uniform mesh needs n_elems >= 1 and length > 0");
        std::vector<double> x(n_elems + 1);
        for (std::size_t i = 0; i <= n_elems; ++i)
            x[i] = origin + length * static_cast<double>(i) / static_cast<double>(n_elems);
        return Mesh1D(std::move(x));
    }

    std::size_t n_elems() const { return ref_nodes.size() - 1; }
    std::size_t n_nodes() const { return ref_nodes.size(); }
    std::size_t n_free() const { return n_elems(); }

    // Connectivity: element e joins global nodes e and e + 1.
    std::array<std::size_t, 2> element(std::size_t e) const { return {e, e + 1}; }
    double ref_length(std::size_t e) const { return ref_nodes[e + 1] - ref_nodes[e]; }
    double length() const { return ref_nodes.back() - ref_nodes.front(); }

    // Reference positions of the free nodes (all but the fixed node 0).
    Vector free_ref_nodes() const { return Vector(ref_nodes.begin() + 1, ref_nodes.end()); }
};

// Linear shape functions of the element [x1, x2] evaluated at X.
inline std::array<double, 2> shape_functions(double x1, double x2, double X)
{
    const double l0 = x2 - x1;
    return {(x2 - X) / l0, (X - x1) / l0};
}

inline std::array<double, 2> shape_derivatives(double l0)
{
    if (!(l0 > 0.0))
        throw std::invalid_argument("element length must be positive");
    return {-1.0 / l0, 1.0 / l0};
}

// Two-point Gauss-Legendre rule on [-1, 1].
inline constexpr std::array<double, 2> gauss_points{-0.57735026918962576451, 0.57735026918962576451};
inline constexpr std::array<double, 2> gauss_weights{1.0, 1.0};

// ---------------------------------------------------------------------------
// Materials

struct LinearElastic {
    double E;
};
struct MooneyRivlin {
    double mu;
    double nu;
};
struct VerondaWestmann {
    double A;
    double B;
};

using MaterialModel = std::variant<LinearElastic, MooneyRivlin, VerondaWestmann>;

inline void validate(const MaterialModel& m)
{
    std::visit(
        [](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, LinearElastic>) {
                if (!(p.E > 0.0))
                    throw InvalidMaterial("linear elastic modulus must be positive");
            } else if constexpr (std::is_same_v<P, MooneyRivlin>) {
                if (!(p.mu > 0.0))
                    throw InvalidMaterial("Mooney-Rivlin mu must be positive");
                if (!(p.nu >= 0.0 && p.nu <= 1.0))
                    throw InvalidMaterial("Mooney-Rivlin nu must lie in [0, 1]");
            } else {
                if (!(p.A > 0.0) || !(p.B > 0.0))
                    throw InvalidMaterial("Veronda-Westmann A and B must be positive");
            }
        },
        m);
}

inline std::string material_name(const MaterialModel& m)
{
    switch (m.index()) {
    case 0: return "linear";
    case 1: return "mooney-rivlin";
    default: return "veronda-westmann";
    }
}

struct StressTangent {
    double P;   // first Piola-Kirchhoff stress
    double dP;  // dP / d(lambda)
};

inline StressTangent stress_tangent(const MaterialModel& m, double lambda)
{
    if (!(lambda > 0.0))
        throw NonPositiveStretch(lambda);
    const double l2 = lambda * lambda;
    const double l3 = l2 * lambda;
    return std::visit(
        [&](const auto& p) -> StressTangent {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, LinearElastic>) {
                return {p.E * (lambda - 1.0), p.E};
            } else if constexpr (std::is_same_v<P, MooneyRivlin>) {
                const double a = lambda - 1.0 / l2;
                const double b = 1.0 - 1.0 / l3;
                const double da = 1.0 + 2.0 / l3;
                const double db = 3.0 / (l3 * lambda);
                return {p.mu * p.nu * a + p.mu * (1.0 - p.nu) * b, p.mu * p.nu * da + p.mu * (1.0 - p.nu) * db};
            } else {
                const double a = lambda - 1.0 / l2;
                const double b = 1.0 - 1.0 / l3;
                const double k = l2 + 2.0 / lambda - 3.0;
                const double da = 1.0 + 2.0 / l3;
                const double db = 3.0 / (l3 * lambda);
                const double dk = 2.0 * lambda - 2.0 / l2;
                const double e = std::exp(p.B * k);
                return {2.0 * p.A * a * e - p.A * b, 2.0 * p.A * (da + a * p.B * dk) * e - p.A * db};
            }
        },
        m);
}

inline double stress(const MaterialModel& m, double lambda) { return stress_tangent(m, lambda).P; }

// ---------------------------------------------------------------------------
// Problem definition and assembly

// How the body load reaches the nodes. Consistent integrates N * b exactly
// (b * l0 / 2 per element node). ElementLengthPerNode gives each element
// node b * l0, i.e. the Gauss weights are applied without the l0 / 2
// Jacobian; the published forward results were produced that way.
enum class BodyLoadRule { Consistent, ElementLengthPerNode };

struct Loading {
    double body = 0.0;      // reference body force density, per unit length
    double traction = 0.0;  // applied at the free end
    BodyLoadRule rule = BodyLoadRule::Consistent;
};

struct ForwardProblem {
    Mesh1D mesh;
    MaterialModel material;
    Loading loading;

    ForwardProblem(Mesh1D m, MaterialModel mat, Loading load)
        : mesh(std::move(m)), material(mat), loading(load)
    {
        validate(material);
        if (!std::isfinite(loading.body) || !std::isfinite(loading.traction))
            throw std::invalid_argument("loads must be finite");
    }
};

// All nodal positions: node 0 fixed at its reference position.
inline Vector full_positions(const Mesh1D& mesh, const Vector& free)
{
    if (free.size() != mesh.n_free())
        throw DimensionMismatch("free position vector has wrong length");
    Vector x(mesh.n_nodes());
    x[0] = mesh.ref_nodes[0];
    for (std::size_t i = 0; i < free.size(); ++i)
        x[i + 1] = free[i];
    return x;
}

inline double element_stretch(const Mesh1D& mesh, const Vector& x_full, std::size_t e)
{
    return (x_full[e + 1] - x_full[e]) / mesh.ref_length(e);
}

// Internal nodal forces over the free nodes for the free positions x.
inline Vector internal_forces(const ForwardProblem& problem, const Vector& x)
{
    const Mesh1D& mesh = problem.mesh;
    const Vector xf = full_positions(mesh, x);
    Vector global(mesh.n_nodes(), 0.0);
    for (std::size_t e = 0; e < mesh.n_elems(); ++e) {
        const double l0 = mesh.ref_length(e);
        const double P = stress(problem.material, element_stretch(mesh, xf, e));
        const auto dN = shape_derivatives(l0);
        const auto nodes = mesh.element(e);
        // P is constant over the element, so the integral of N_a,X * P is exact.
        for (int a = 0; a < 2; ++a)
            global[nodes[a]] += dN[a] * P * l0;
    }
    return Vector(global.begin() + 1, global.end());
}

inline Vector external_forces(const ForwardProblem& problem)
{
    const Mesh1D& mesh = problem.mesh;
    Vector global(mesh.n_nodes(), 0.0);
    for (std::size_t e = 0; e < mesh.n_elems(); ++e) {
        const double x1 = mesh.ref_nodes[e];
        const double x2 = mesh.ref_nodes[e + 1];
        const double half = 0.5 * (x2 - x1);
        const double mid = 0.5 * (x1 + x2);
        const double jac = problem.loading.rule == BodyLoadRule::Consistent ? half : 2.0 * half;
        const auto nodes = mesh.element(e);
        for (std::size_t g = 0; g < gauss_points.size(); ++g) {
            const auto N = shape_functions(x1, x2, mid + half * gauss_points[g]);
            for (int a = 0; a < 2; ++a)
                global[nodes[a]] += N[a] * problem.loading.body * gauss_weights[g] * jac;
        }
    }
    global.back() += problem.loading.traction;
    return Vector(global.begin() + 1, global.end());
}

// Tangent of f_int with respect to the free positions (tridiagonal).
inline Matrix internal_stiffness(const ForwardProblem& problem, const Vector& x)
{
    const Mesh1D& mesh = problem.mesh;
    const Vector xf = full_positions(mesh, x);
    const std::size_t n = mesh.n_nodes();
    Matrix k(n, n);
    for (std::size_t e = 0; e < mesh.n_elems(); ++e) {
        const double l0 = mesh.ref_length(e);
        const double dP = stress_tangent(problem.material, element_stretch(mesh, xf, e)).dP;
        const auto dN = shape_derivatives(l0);
        const auto nodes = mesh.element(e);
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                k(nodes[a], nodes[b]) += dN[a] * dP * dN[b] * l0;
    }
    Matrix free(n - 1, n - 1);
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 1; j < n; ++j)
            free(i - 1, j - 1) = k(i, j);
    return free;
}

// F(x) = f_ext - f_int over the free nodes.
inline ProblemSystem forward_residual(const ForwardProblem& problem)
{
    ProblemSystem sys;
    sys.name = "fem-" + material_name(problem.material);
    sys.dim = problem.mesh.n_free();
    const Vector fext = external_forces(problem);
    sys.residual = [problem, fext](const Vector& x) { return fext - internal_forces(problem, x); };
    sys.analytic_jacobian = [problem](const Vector& x) {
        Matrix k = internal_stiffness(problem, x);
        for (std::size_t i = 0; i < k.rows(); ++i)
            for (std::size_t j = 0; j < k.cols(); ++j)
                k(i, j) = -k(i, j);
        return k;
    };
    return sys;
}

// ---------------------------------------------------------------------------
// Forward solve

struct DeformedState {
    Vector cur_nodes;
    std::vector<double> stretch;
    std::vector<double> stress;

    double total_length() const { return cur_nodes.back() - cur_nodes.front(); }
};

inline DeformedState deformed_state(const ForwardProblem& problem, const Vector& x)
{
    DeformedState s;
    s.cur_nodes = full_positions(problem.mesh, x);
    for (std::size_t e = 0; e < problem.mesh.n_elems(); ++e) {
        const double lam = element_stretch(problem.mesh, s.cur_nodes, e);
        s.stretch.push_back(lam);
        s.stress.push_back(stress(problem.material, lam));
    }
    return s;
}

struct NewtonMethod {};
struct ExtendedNewtonMethod {
    CPolicy policy;
    CUpdate update = CUpdate::FromCurrentIterate;
};
using ForwardMethod = std::variant<NewtonMethod, ExtendedNewtonMethod>;

inline Vector jitter(std::size_t n, double scale, RngSeed seed)
{
    Rng rng(seed);
    Vector zeta(n);
    for (double& z : zeta)
        z = scale * rng.uniform(0.5, 1.5);
    return zeta;
}

// c = phi * x + zeta, recomputed from the current nodal positions at every
// iteration (equal to phi * X + zeta at the initial guess x = X).
inline ExtendedNewtonMethod enr_with_phi(const ForwardProblem& problem, double phi, RngSeed seed,
                                         double jitter_scale = 1e-3)
{
    return {ScaleWithJitter{phi, jitter(problem.mesh.n_free(), jitter_scale, seed)}, CUpdate::FromCurrentIterate};
}

// c = phi * X + zeta held fixed for the whole solve.
inline ExtendedNewtonMethod enr_with_fixed_phi(const ForwardProblem& problem, double phi, RngSeed seed,
                                               double jitter_scale = 1e-3)
{
    return {affine_of_reference(phi, problem.mesh.free_ref_nodes(), jitter_scale, seed), CUpdate::FromInitialGuess};
}

struct ForwardResult {
    SolveTrace trace;
    std::optional<DeformedState> state;  // present when the solve converged
};

// Forward tolerances: only equilibrium (|f_ext - f_int| <= t_a) counts as
// convergence, so a run that stalls away from equilibrium reaches the cap.
inline Tolerances forward_tolerances()
{
    Tolerances t;
    t.require_residual = true;
    return t;
}

inline ForwardResult forward_solve(const ForwardProblem& problem, const ForwardMethod& method,
                                   const Tolerances& tol = forward_tolerances())
{
    const ProblemSystem sys = forward_residual(problem);
    const Vector x0 = problem.mesh.free_ref_nodes();
    ForwardResult out;
    if (std::holds_alternative<NewtonMethod>(method))
        out.trace = newton_raphson(sys, x0, tol);
    else
    {
        const auto& enr = std::get<ExtendedNewtonMethod>(method);
        out.trace = enr_solve(sys, x0, enr.policy, tol, enr.update);
    }
    if (out.trace.status.converged())
        out.state = deformed_state(problem, out.trace.final_iterate());
    return out;
}

struct PhiSweepRow {
    double phi;
    SolveStatus status;
    std::size_t iterations;
    std::optional<double> length;
};

// ENR forward solves with c = phi * X + zeta for phi = start, start + step,
// ... up to stop (inclusive within a small slack).
inline std::vector<PhiSweepRow> phi_sweep(const ForwardProblem& problem, double start, double stop, double step,
                                          RngSeed seed, const Tolerances& tol = forward_tolerances())
{
    if (!(step > 0.0) || stop < start)
        throw std::invalid_argument("phi sweep needs step > 0 and stop >= start");
    std::vector<PhiSweepRow> rows;
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (std::size_t k = 0; k < count; ++k) {
        const double phi = start + step * static_cast<double>(k);
        const auto r = forward_solve(problem, enr_with_phi(problem, phi, derive_seed(seed, k)), tol);
        PhiSweepRow row{phi, r.trace.status, r.trace.iterations(), std::nullopt};
        if (r.state)
            row.length = r.state->total_length();
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Inverse problems: fit material constants to (stretch, stress) pairs.

enum class MaterialFamily { Linear, MooneyRivlin, VerondaWestmann };

inline MaterialModel material_from_params(MaterialFamily family, Params theta)
{
    switch (family) {
    case MaterialFamily::Linear: return LinearElastic{theta[0]};
    case MaterialFamily::MooneyRivlin: return MooneyRivlin{theta[0], theta[1]};
    default: return VerondaWestmann{theta[0], theta[1]};
    }
}

inline Vector material_params(const MaterialModel& m)
{
    return std::visit(
        [](const auto& p) -> Vector {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, LinearElastic>)
                return {p.E};
            else if constexpr (std::is_same_v<P, MooneyRivlin>)
                return {p.mu, p.nu};
            else
                return {p.A, p.B};
        },
        m);
}

// Stress as a function of the material constants, input = stretch. Parameter
// bounds are not enforced here so a fit may pass through them.
inline FitModel inverse_model(MaterialFamily family)
{
    FitModel m;
    m.input_dims = 1;
    auto check = [](double lambda) {
        if (!(lambda > 0.0))
            throw NonPositiveStretch(lambda);
    };
    switch (family) {
    case MaterialFamily::Linear:
        m.name = "inverse-linear";
        m.param_count = 1;
        m.eval = [check](Inputs x, Params t) {
            check(x[0]);
            return t[0] * (x[0] - 1.0);
        };
        m.gradient = [](Inputs x, Params) { return Vector{x[0] - 1.0}; };
        m.hessian = [](Inputs, Params) { return Matrix(1, 1); };
        break;
    case MaterialFamily::MooneyRivlin:
        m.name = "inverse-mooney-rivlin";
        m.param_count = 2;
        m.eval = [check](Inputs x, Params t) {
            check(x[0]);
            const double l = x[0];
            return t[0] * t[1] * (l - 1.0 / (l * l)) + t[0] * (1.0 - t[1]) * (1.0 - 1.0 / (l * l * l));
        };
        m.gradient = [](Inputs x, Params t) {
            const double l = x[0];
            const double a = l - 1.0 / (l * l);
            const double b = 1.0 - 1.0 / (l * l * l);
            return Vector{t[1] * a + (1.0 - t[1]) * b, t[0] * (a - b)};
        };
        m.hessian = [](Inputs x, Params) {
            const double l = x[0];
            const double ab = (l - 1.0 / (l * l)) - (1.0 - 1.0 / (l * l * l));
            return Matrix(2, 2, {0.0, ab, ab, 0.0});
        };
        break;
    case MaterialFamily::VerondaWestmann:
        m.name = "inverse-veronda-westmann";
        m.param_count = 2;
        m.eval = [check](Inputs x, Params t) {
            check(x[0]);
            const double l = x[0];
            const double k = l * l + 2.0 / l - 3.0;
            return 2.0 * t[0] * (l - 1.0 / (l * l)) * std::exp(t[1] * k) - t[0] * (1.0 - 1.0 / (l * l * l));
        };
        m.gradient = [](Inputs x, Params t) {
            const double l = x[0];
            const double a = l - 1.0 / (l * l);
            const double k = l * l + 2.0 / l - 3.0;
            const double e = std::exp(t[1] * k);
            return Vector{2.0 * a * e - (1.0 - 1.0 / (l * l * l)), 2.0 * t[0] * a * k * e};
        };
        m.hessian = [](Inputs x, Params t) {
            const double l = x[0];
            const double a = l - 1.0 / (l * l);
            const double k = l * l + 2.0 / l - 3.0;
            const double e = std::exp(t[1] * k);
            return Matrix(2, 2, {0.0, 2.0 * a * k * e, 2.0 * a * k * e, 2.0 * t[0] * a * k * k * e});
        };
        break;
    }
    return m;
}

inline Observations inverse_observations(const std::vector<double>& stretches, const std::vector<double>& stresses)
{
    if (stretches.size() != stresses.size())
        throw DimensionMismatch("stretch and stress samples differ in length");
    Observations obs;
    for (std::size_t i = 0; i < stretches.size(); ++i) {
        if (!(stretches[i] > 0.0))
            throw NonPositiveStretch(stretches[i]);
        obs.inputs.push_back({stretches[i]});
    }
    obs.outputs = stresses;
    return obs;
}

// ---------------------------------------------------------------------------
// CSV: one row per node; stretch and stress are those of the element ending
// at that node (blank for node 0).

inline void write_deformed_csv(std::ostream& os, const ForwardProblem& problem, const DeformedState& s)
{
    char buf[160];
    os << "node,X,x,stretch,stress\n";
    for (std::size_t i = 0; i < problem.mesh.n_nodes(); ++i) {
        if (i == 0)
            std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,,\n", i, problem.mesh.ref_nodes[i], s.cur_nodes[i]);
        else
            std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", i, problem.mesh.ref_nodes[i], s.cur_nodes[i],
                          s.stretch[i - 1], s.stress[i - 1]);
        os << buf;
    }
}

} // namespace nonlin::fem
