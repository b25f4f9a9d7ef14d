#pragma once

// Newton-Raphson, Extended Newton-Raphson (ENR) and the diagonal secant
// method for square nonlinear systems F(x) = 0, with a shared trace and
// termination policy, plus rate/order-of-convergence estimation.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "numkit.hpp"

namespace nonlin {

// Raised by a system when evaluated outside its domain (e.g. 1/0).
class DomainError : public NumericError {
public:
    using NumericError::NumericError;
};

// Denominator F_j(x) - F_j(c) collapsed, or c coincided with x.
class SingularModification : public NumericError {
public:
    SingularModification() : NumericError("singular modification: F(x) - F(c) vanished") {}
};

class ImmediateFailure : public std::invalid_argument {
public:
    ImmediateFailure() : std::invalid_argument("diagonal secant: initial guesses share a coordinate") {}
};

class InsufficientData : public std::invalid_argument {
public:
    InsufficientData() : std::invalid_argument("rate/order estimation needs at least four error terms") {}
};

inline double fd_step(double x) { return 1e-6 * (1.0 + std::abs(x)); }

// Central-difference Jacobian J(i, k) = dF_i/dx_k.
template <class F>
Matrix fd_jacobian(F&& f, const Vector& x)
{
    const std::size_t n = x.size();
    Matrix jac;
    Vector xp = x;
    for (std::size_t k = 0; k < n; ++k) {
        const double h = fd_step(x[k]);
        xp[k] = x[k] + h;
        const Vector fp = f(xp);
        xp[k] = x[k] - h;
        const Vector fm = f(xp);
        xp[k] = x[k];
        if (k == 0)
            jac = Matrix(fp.size(), n);
        for (std::size_t i = 0; i < fp.size(); ++i)
            jac(i, k) = (fp[i] - fm[i]) / (2.0 * h);
    }
    return jac;
}

struct ProblemSystem {
    std::string name;
    std::size_t dim = 0;
    std::function<Vector(const Vector&)> residual;
    // Analytic Jacobian; empty means central finite differences.
    std::function<Matrix(const Vector&)> analytic_jacobian;
    std::vector<Vector> known_roots;

    Vector operator()(const Vector& x) const { return residual(x); }

    Matrix jacobian(const Vector& x) const
    {
        if (analytic_jacobian)
            return analytic_jacobian(x);
        return fd_jacobian(residual, x);
    }
};

struct Tolerances {
    double rel_step = 1e-6;          // t_r, on |dx|
    double abs_residual = 0.001414;  // t_a, on |F(x)|
    std::size_t max_iters = 100;
    double denom_guard = 1e-12;      // relative to 1 + |F_j(x)|
    // When set, a small step alone does not end the run; only |F| <= t_a
    // counts as convergence.
    bool require_residual = false;

    void validate() const
    {
        if (!(rel_step > 0.0) || !(abs_residual > 0.0) || !(denom_guard > 0.0) || max_iters < 1)
            throw std::invalid_argument("tolerances must be positive and max_iters >= 1");
    }
};

enum class Outcome { Converged, MaxItersExceeded, Diverged };
enum class DivergenceCause { None, Overflow, ZeroDivision, SingularModification };

struct SolveStatus {
    Outcome outcome = Outcome::MaxItersExceeded;
    DivergenceCause cause = DivergenceCause::None;

    bool converged() const { return outcome == Outcome::Converged; }
    bool diverged() const { return outcome == Outcome::Diverged; }

    static SolveStatus ok() { return {Outcome::Converged, DivergenceCause::None}; }
    static SolveStatus capped() { return {Outcome::MaxItersExceeded, DivergenceCause::None}; }
    static SolveStatus failed(DivergenceCause c) { return {Outcome::Diverged, c}; }
};

inline std::string to_string(SolveStatus s)
{
    switch (s.outcome) {
    case Outcome::Converged:
        return "converged";
    case Outcome::MaxItersExceeded:
        return "max-iters";
    case Outcome::Diverged:
        switch (s.cause) {
        case DivergenceCause::Overflow:
            return "diverged:overflow";
        case DivergenceCause::ZeroDivision:
            return "diverged:zero-division";
        case DivergenceCause::SingularModification:
            return "diverged:singular-modification";
        case DivergenceCause::None:
            break;
        }
        return "diverged";
    }
    return "unknown";
}

struct SolveTrace {
    std::vector<Vector> iterates;
    std::vector<Vector> steps;
    std::vector<double> residual_norms;
    SolveStatus status;

    std::size_t iterations() const { return steps.size(); }
    const Vector& final_iterate() const { return iterates.back(); }
};

// ---------------------------------------------------------------------------
// Modification-parameter policies for ENR.

struct ScaleAll {
    double phi;
};
struct ScalePerAxis {
    Vector phi;
};
struct Offset {
    double delta;
};
struct ConstantC {
    Vector c;
};
// c = phi * X + zeta with X a fixed reference vector (FEM: reference nodes).
struct AffineOfReference {
    double phi;
    double jitter_scale;
    Vector reference;
    Vector zeta;
};

// c = phi * x + zeta, x the point the policy is evaluated at.
struct ScaleWithJitter {
    double phi;
    Vector zeta;
};

using CPolicy = std::variant<ScaleAll, ScalePerAxis, Offset, ConstantC, AffineOfReference, ScaleWithJitter>;

// Per-entry jitter zeta_i drawn uniformly from [0.5, 1.5] * jitter_scale.
inline AffineOfReference affine_of_reference(double phi, const Vector& reference, double jitter_scale, RngSeed seed)
{
    Rng rng(seed);
    Vector zeta(reference.size());
    for (double& z : zeta)
        z = jitter_scale * rng.uniform(0.5, 1.5);
    return {phi, jitter_scale, reference, std::move(zeta)};
}

inline Vector modification_point(const CPolicy& policy, const Vector& x)
{
    const std::size_t n = x.size();
    Vector c(n);
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, ScaleAll>) {
                for (std::size_t i = 0; i < n; ++i)
                    c[i] = p.phi * x[i];
            } else if constexpr (std::is_same_v<P, ScalePerAxis>) {
                if (p.phi.size() != n)
                    throw DimensionMismatch("per-axis c policy length mismatch");
                for (std::size_t i = 0; i < n; ++i)
                    c[i] = p.phi[i] * x[i];
            } else if constexpr (std::is_same_v<P, Offset>) {
                for (std::size_t i = 0; i < n; ++i)
                    c[i] = x[i] + p.delta;
            } else if constexpr (std::is_same_v<P, ConstantC>) {
                if (p.c.size() != n)
                    throw DimensionMismatch("constant c length mismatch");
                c = p.c;
            } else if constexpr (std::is_same_v<P, AffineOfReference>) {
                if (p.reference.size() != n || p.zeta.size() != n)
                    throw DimensionMismatch("affine c policy length mismatch");
                for (std::size_t i = 0; i < n; ++i)
                    c[i] = p.phi * p.reference[i] + p.zeta[i];
            } else {
                if (p.zeta.size() != n)
                    throw DimensionMismatch("jittered c policy length mismatch");
                for (std::size_t i = 0; i < n; ++i)
                    c[i] = p.phi * x[i] + p.zeta[i];
            }
        },
        policy);
    return c;
}

// ---------------------------------------------------------------------------
// ENR building blocks. Row L of the flattened quantities is L = i*N + j.

namespace detail {

struct EnrFactors {
    Vector fx;  // F(x)
    Vector g;   // G_j = F_j(x) / (F_j(x) - F_j(c))
    Vector h;   // H_j = -F_j(c) / (F_j(x) - F_j(c))^2
};

inline EnrFactors enr_factors(const Vector& fx, const Vector& fc, double denom_guard)
{
    const std::size_t n = fx.size();
    EnrFactors f{fx, Vector(n), Vector(n)};
    for (std::size_t j = 0; j < n; ++j) {
        const double d = fx[j] - fc[j];
        if (!(std::abs(d) >= denom_guard * (1.0 + std::abs(fx[j]))))
            throw SingularModification();
        f.g[j] = fx[j] / d;
        f.h[j] = -fc[j] / (d * d);
    }
    return f;
}

inline Matrix enr_q(const Vector& x, const Vector& c, const EnrFactors& f)
{
    const std::size_t n = x.size();
    Matrix q(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            q(i, j) = (x[i] - c[i]) * f.g[j];
    return q;
}

inline Matrix enr_w(const Vector& x, const Vector& c, const EnrFactors& f, const Matrix& jac)
{
    const std::size_t n = x.size();
    Matrix w(n * n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t row = i * n + j;
            for (std::size_t k = 0; k < n; ++k)
                w(row, k) = (i == k ? f.g[j] : 0.0) + (x[i] - c[i]) * jac(j, k) * f.h[j];
        }
    return w;
}

} // namespace detail

// q(i, j) = (x_i - c_i) F_j(x) / (F_j(x) - F_j(c)), no summation over j.
inline Matrix enr_build_q(const ProblemSystem& system, const Vector& x, const Vector& c,
                          double denom_guard = Tolerances{}.denom_guard)
{
    const auto f = detail::enr_factors(system(x), system(c), denom_guard);
    return detail::enr_q(x, c, f);
}

// Derivative of q flattened to an N^2 x N matrix: w(L, k) = dq_ij/dx_k.
inline Matrix enr_build_w(const ProblemSystem& system, const Vector& x, const Vector& c,
                          double denom_guard = Tolerances{}.denom_guard)
{
    const auto f = detail::enr_factors(system(x), system(c), denom_guard);
    return detail::enr_w(x, c, f, system.jacobian(x));
}

inline Vector flatten(const Matrix& m)
{
    return Vector(m.entries().begin(), m.entries().end());
}

// ---------------------------------------------------------------------------
// Shared iteration driver.

namespace detail {

// step(x, fx) returns the update; it may throw SingularMatrix, DomainError
// or SingularModification, which end the run as divergence.
template <class Step>
SolveTrace iterate(const ProblemSystem& system, const Vector& x0, const Tolerances& tol, Step&& step)
{
    tol.validate();
    SolveTrace trace;
    Vector x = x0;
    Vector fx;

    auto fail = [&](DivergenceCause cause) {
        trace.status = SolveStatus::failed(cause);
        return trace;
    };

    trace.iterates.push_back(x);
    try {
        fx = system(x);
    } catch (const DomainError&) {
        trace.residual_norms.push_back(INFINITY);
        return fail(DivergenceCause::ZeroDivision);
    }
    trace.residual_norms.push_back(norm2(fx));
    if (!all_finite(x) || !all_finite(fx))
        return fail(DivergenceCause::Overflow);

    for (;;) {
        if (trace.residual_norms.back() <= tol.abs_residual) {
            trace.status = SolveStatus::ok();
            return trace;
        }
        if (trace.steps.size() >= tol.max_iters) {
            trace.status = SolveStatus::capped();
            return trace;
        }

        Vector dx;
        try {
            dx = step(x, fx);
        } catch (const SingularMatrix&) {
            return fail(DivergenceCause::ZeroDivision);
        } catch (const DomainError&) {
            return fail(DivergenceCause::ZeroDivision);
        } catch (const SingularModification&) {
            return fail(DivergenceCause::SingularModification);
        }
        if (!all_finite(dx))
            return fail(DivergenceCause::Overflow);

        x = x + dx;
        trace.iterates.push_back(x);
        trace.steps.push_back(dx);
        try {
            fx = system(x);
        } catch (const DomainError&) {
            trace.residual_norms.push_back(INFINITY);
            return fail(DivergenceCause::ZeroDivision);
        }
        const double rn = norm2(fx);
        trace.residual_norms.push_back(rn);
        if (!all_finite(x) || !std::isfinite(rn))
            return fail(DivergenceCause::Overflow);

        if (!tol.require_residual && norm2(dx) <= tol.rel_step) {
            trace.status = SolveStatus::ok();
            return trace;
        }
    }
}

} // namespace detail

inline SolveTrace newton_raphson(const ProblemSystem& system, const Vector& x0, const Tolerances& tol = {})
{
    return detail::iterate(system, x0, tol, [&](const Vector& x, const Vector& fx) {
        const Matrix jac = system.jacobian(x);
        if (!jac.all_finite())
            throw SingularMatrix();
        Vector rhs(fx.size());
        for (std::size_t i = 0; i < fx.size(); ++i)
            rhs[i] = -fx[i];
        return lu_solve(jac, rhs);
    });
}

// One ENR step: dx = pinv(w) * (-q flattened).
inline Vector enr_step(const ProblemSystem& system, const Vector& x, const Vector& fx, const Vector& c,
                       double denom_guard)
{
    for (std::size_t i = 0; i < x.size(); ++i)
        if (c[i] == x[i])
            throw SingularModification();
    const Vector fc = system(c);
    if (!all_finite(fc))
        throw SingularModification();
    const auto f = detail::enr_factors(fx, fc, denom_guard);
    const Matrix jac = system.jacobian(x);
    const Matrix w = detail::enr_w(x, c, f, jac);
    if (!w.all_finite())
        throw SingularModification();
    Vector rhs = flatten(detail::enr_q(x, c, f));
    for (double& v : rhs)
        v = -v;
    return moore_penrose_pinv(w) * rhs;
}

// When the modification point is evaluated. FromInitialGuess computes c once
// from x0 and holds it; FromCurrentIterate recomputes it at every step.
enum class CUpdate { FromInitialGuess, FromCurrentIterate };

inline SolveTrace enr_solve(const ProblemSystem& system, const Vector& x0, const CPolicy& policy,
                            const Tolerances& tol = {}, CUpdate update = CUpdate::FromInitialGuess)
{
    const Vector c0 = modification_point(policy, x0);
    return detail::iterate(system, x0, tol, [&](const Vector& x, const Vector& fx) {
        if (update == CUpdate::FromInitialGuess)
            return enr_step(system, x, fx, c0, tol.denom_guard);
        return enr_step(system, x, fx, modification_point(policy, x), tol.denom_guard);
    });
}

// Sign convention of the diagonal secant update. Standard is the classic
// secant direction dx_i = -F_i dX_i / dH_i; Literal negates it.
enum class SecantSign { Standard, Literal };

// Componentwise secant iteration driven by two initial guesses. The first
// recorded step is x1 - x0.
inline SolveTrace diagonal_secant(const ProblemSystem& system, const Vector& x0, const Vector& x1,
                                  const Tolerances& tol = {}, SecantSign sign = SecantSign::Standard)
{
    tol.validate();
    if (x0.size() != x1.size())
        throw DimensionMismatch("diagonal secant guesses differ in length");
    for (std::size_t i = 0; i < x0.size(); ++i)
        if (x0[i] == x1[i])
            throw ImmediateFailure();

    SolveTrace trace;
    auto fail = [&](DivergenceCause cause) {
        trace.status = SolveStatus::failed(cause);
        return trace;
    };
    auto eval = [&](const Vector& x, Vector& out) {
        try {
            out = system(x);
        } catch (const DomainError&) {
            trace.residual_norms.push_back(INFINITY);
            return DivergenceCause::ZeroDivision;
        }
        trace.residual_norms.push_back(norm2(out));
        if (!all_finite(x) || !all_finite(out))
            return DivergenceCause::Overflow;
        return DivergenceCause::None;
    };

    Vector prev = x0, cur = x1, fprev, fcur;
    trace.iterates.push_back(prev);
    if (auto c = eval(prev, fprev); c != DivergenceCause::None)
        return fail(c);
    trace.iterates.push_back(cur);
    trace.steps.push_back(cur - prev);
    if (auto c = eval(cur, fcur); c != DivergenceCause::None)
        return fail(c);

    const double direction = sign == SecantSign::Standard ? -1.0 : 1.0;
    for (;;) {
        if (trace.residual_norms.back() <= tol.abs_residual) {
            trace.status = SolveStatus::ok();
            return trace;
        }
        if (trace.steps.size() >= tol.max_iters) {
            trace.status = SolveStatus::capped();
            return trace;
        }
        const std::size_t n = cur.size();
        Vector dx(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double dX = cur[i] - prev[i];
            const double dH = fcur[i] - fprev[i];
            if (dX == 0.0) {
                dx[i] = 0.0;
                continue;
            }
            if (dH == 0.0)
                return fail(DivergenceCause::ZeroDivision);
            dx[i] = direction * fcur[i] * dX / dH;
        }
        if (!all_finite(dx))
            return fail(DivergenceCause::Overflow);
        prev = cur;
        fprev = fcur;
        cur = cur + dx;
        trace.iterates.push_back(cur);
        trace.steps.push_back(dx);
        if (auto c = eval(cur, fcur); c != DivergenceCause::None)
            return fail(c);
        if (!tol.require_residual && norm2(dx) <= tol.rel_step) {
            trace.status = SolveStatus::ok();
            return trace;
        }
    }
}

// ---------------------------------------------------------------------------
// Rate and order of convergence.

struct RateOrderEstimate {
    std::vector<double> order_q;
    std::vector<double> rate_mu;
};

// q_n = log(e_{n+1}/e_n) / log(e_n/e_{n-1}),  mu_n = e_{n+1} / e_n^q_n
// for n = 1 .. len-2.
inline RateOrderEstimate estimate_rate_order(std::span<const double> errors)
{
    if (errors.size() < 4)
        throw InsufficientData();
    for (double e : errors)
        if (!(e > 0.0) || !std::isfinite(e))
            throw std::invalid_argument("error terms must be positive and finite");
    RateOrderEstimate out;
    for (std::size_t n = 1; n + 1 < errors.size(); ++n) {
        const double q = std::log(errors[n + 1] / errors[n]) / std::log(errors[n] / errors[n - 1]);
        out.order_q.push_back(q);
        out.rate_mu.push_back(errors[n + 1] / std::pow(errors[n], q));
    }
    return out;
}

// e_n = |x_n - reference|; trailing zero errors (iterates equal to the
// reference) are dropped since they carry no rate information.
inline std::vector<double> error_sequence(std::span<const Vector> iterates, const Vector& reference)
{
    std::vector<double> e;
    e.reserve(iterates.size());
    for (const auto& x : iterates)
        e.push_back(norm2(x - reference));
    while (!e.empty() && e.back() == 0.0)
        e.pop_back();
    return e;
}

} // namespace nonlin
