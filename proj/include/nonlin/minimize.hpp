#pragma once

// Nonlinear least squares: Gauss-Newton and Corrected Gauss-Newton over a
// parameterised model f(x, theta), with residual r_i = y_i - f(x_i, theta).

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "numkit.hpp"
#include "rootfind.hpp"

namespace nonlin {

class NonFiniteModel : public NumericError {
public:
    NonFiniteModel() : NumericError("model evaluated to a non-finite value") {}
};

using Inputs = std::span<const double>;
using Params = std::span<const double>;

struct FitModel {
    std::string name;
    std::size_t param_count = 0;
    std::size_t input_dims = 1;
    std::function<double(Inputs, Params)> eval;
    // Optional analytic df/dtheta (length p) and d2f/dtheta2 (p x p).
    std::function<Vector(Inputs, Params)> gradient;
    std::function<Matrix(Inputs, Params)> hessian;
    std::optional<Vector> true_params;

    // Copy with analytic derivatives removed; derivatives then come from
    // finite differences.
    FitModel without_derivatives() const
    {
        FitModel m = *this;
        m.gradient = nullptr;
        m.hessian = nullptr;
        return m;
    }
};

struct Observations {
    std::vector<Vector> inputs;
    Vector outputs;
    std::optional<double> snr_db;

    std::size_t size() const { return outputs.size(); }
};

struct FitTrace {
    std::vector<Vector> iterates;
    std::vector<Vector> steps;
    std::vector<double> sse;
    SolveStatus status;

    std::size_t iterations() const { return steps.size(); }
    const Vector& final_iterate() const { return iterates.back(); }
};

// Least-squares defaults: t_r on |dtheta|; t_a on |r| only stops a run
// whose data is matched exactly.
inline Tolerances fit_tolerances()
{
    Tolerances t;
    t.rel_step = 1e-6;
    t.abs_residual = 1e-10;
    t.max_iters = 100;
    return t;
}

namespace detail {

inline void check_params(const FitModel& model, std::span<const double> theta)
{
    if (theta.size() != model.param_count)
        throw DimensionMismatch("parameter vector length does not match model " + model.name);
}

inline double checked_eval(const FitModel& model, Inputs x, Params theta)
{
    const double v = model.eval(x, theta);
    if (!std::isfinite(v))
        throw NonFiniteModel();
    return v;
}

inline double fd_second_step(double t) { return 1e-4 * (1.0 + std::abs(t)); }

} // namespace detail

inline Vector residuals(const FitModel& model, const Observations& obs, std::span<const double> theta)
{
    detail::check_params(model, theta);
    Vector r(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i)
        r[i] = obs.outputs[i] - detail::checked_eval(model, obs.inputs[i], theta);
    return r;
}

// J(i, j) = dr_i/dtheta_j = -df(x_i)/dtheta_j.
inline Matrix jacobian(const FitModel& model, const Observations& obs, std::span<const double> theta)
{
    detail::check_params(model, theta);
    const std::size_t m = obs.size(), p = model.param_count;
    Matrix jac(m, p);
    if (model.gradient) {
        for (std::size_t i = 0; i < m; ++i) {
            const Vector g = model.gradient(obs.inputs[i], theta);
            for (std::size_t j = 0; j < p; ++j)
                jac(i, j) = -g[j];
        }
    } else {
        Vector t(theta.begin(), theta.end());
        for (std::size_t j = 0; j < p; ++j) {
            const double h = fd_step(theta[j]);
            for (std::size_t i = 0; i < m; ++i) {
                t[j] = theta[j] + h;
                const double fp = detail::checked_eval(model, obs.inputs[i], t);
                t[j] = theta[j] - h;
                const double fm = detail::checked_eval(model, obs.inputs[i], t);
                t[j] = theta[j];
                jac(i, j) = -(fp - fm) / (2.0 * h);
            }
        }
    }
    if (!jac.all_finite())
        throw NonFiniteModel();
    return jac;
}

// r_{i,jk} as m matrices of shape p x p.
inline std::vector<Matrix> residual_second_derivative(const FitModel& model, const Observations& obs,
                                                      std::span<const double> theta)
{
    detail::check_params(model, theta);
    const std::size_t m = obs.size(), p = model.param_count;
    std::vector<Matrix> out(m, Matrix(p, p));
    if (model.hessian) {
        for (std::size_t i = 0; i < m; ++i) {
            const Matrix hess = model.hessian(obs.inputs[i], theta);
            for (std::size_t j = 0; j < p; ++j)
                for (std::size_t k = 0; k < p; ++k)
                    out[i](j, k) = -hess(j, k);
        }
        return out;
    }

    Vector t(theta.begin(), theta.end());
    auto f_at = [&](std::size_t i) { return detail::checked_eval(model, obs.inputs[i], t); };
    for (std::size_t i = 0; i < m; ++i) {
        const double f0 = f_at(i);
        for (std::size_t j = 0; j < p; ++j) {
            const double hj = detail::fd_second_step(theta[j]);
            t[j] = theta[j] + hj;
            const double fp = f_at(i);
            t[j] = theta[j] - hj;
            const double fm = f_at(i);
            t[j] = theta[j];
            out[i](j, j) = -(fp - 2.0 * f0 + fm) / (hj * hj);
            for (std::size_t k = j + 1; k < p; ++k) {
                const double hk = detail::fd_second_step(theta[k]);
                double acc = 0.0;
                for (int sj : {1, -1})
                    for (int sk : {1, -1}) {
                        t[j] = theta[j] + sj * hj;
                        t[k] = theta[k] + sk * hk;
                        acc += sj * sk * f_at(i);
                    }
                t[j] = theta[j];
                t[k] = theta[k];
                const double v = -acc / (4.0 * hj * hk);
                out[i](j, k) = v;
                out[i](k, j) = v;
            }
        }
    }
    return out;
}

// Solves (A^T A) d = -A^T r by LU on the normal matrix.
inline Vector normal_equation_step(const Matrix& a, std::span<const double> r)
{
    const Matrix at = a.transpose();
    const Matrix ata = at * a;
    Vector rhs = at * r;
    for (double& v : rhs)
        v = -v;
    return lu_solve(ata, rhs);
}

inline Vector gauss_newton_step(const FitModel& model, const Observations& obs, std::span<const double> theta,
                                const Vector& r)
{
    return normal_equation_step(jacobian(model, obs, theta), r);
}

// s_ij = r_{i,j} + 1/2 r_{i,jk} dhat_k
inline Matrix corrected_jacobian(const Matrix& jac, const std::vector<Matrix>& second, std::span<const double> dhat)
{
    Matrix s = jac;
    for (std::size_t i = 0; i < jac.rows(); ++i)
        for (std::size_t j = 0; j < jac.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < jac.cols(); ++k)
                acc += second[i](j, k) * dhat[k];
            s(i, j) += 0.5 * acc;
        }
    return s;
}

inline Vector corrected_gauss_newton_step(const FitModel& model, const Observations& obs,
                                          std::span<const double> theta, const Vector& r)
{
    const Matrix jac = jacobian(model, obs, theta);
    const Vector dhat = normal_equation_step(jac, r);
    const Matrix s = corrected_jacobian(jac, residual_second_derivative(model, obs, theta), dhat);
    if (!s.all_finite())
        throw NonFiniteModel();
    return normal_equation_step(s, r);
}

namespace detail {

template <class Step>
FitTrace fit_loop(const FitModel& model, const Observations& obs, const Vector& theta0, const Tolerances& tol,
                  Step&& step)
{
    tol.validate();
    check_params(model, theta0);
    if (obs.size() < model.param_count)
        throw std::invalid_argument("fewer observations than parameters");

    FitTrace trace;
    Vector theta = theta0;
    Vector r;
    auto fail = [&](DivergenceCause cause) {
        trace.status = SolveStatus::failed(cause);
        return trace;
    };
    auto eval = [&]() -> DivergenceCause {
        try {
            r = residuals(model, obs, theta);
        } catch (const NonFiniteModel&) {
            trace.sse.push_back(INFINITY);
            return DivergenceCause::Overflow;
        } catch (const DomainError&) {
            trace.sse.push_back(INFINITY);
            return DivergenceCause::ZeroDivision;
        }
        const double sse = dot(r, r);
        trace.sse.push_back(sse);
        return std::isfinite(sse) ? DivergenceCause::None : DivergenceCause::Overflow;
    };

    trace.iterates.push_back(theta);
    if (auto c = eval(); c != DivergenceCause::None)
        return fail(c);

    for (;;) {
        if (std::sqrt(trace.sse.back()) <= tol.abs_residual) {
            trace.status = SolveStatus::ok();
            return trace;
        }
        if (trace.steps.size() >= tol.max_iters) {
            trace.status = SolveStatus::capped();
            return trace;
        }
        Vector d;
        try {
            d = step(theta, r);
        } catch (const SingularMatrix&) {
            return fail(DivergenceCause::ZeroDivision);
        } catch (const DomainError&) {
            return fail(DivergenceCause::ZeroDivision);
        } catch (const NonFiniteModel&) {
            return fail(DivergenceCause::Overflow);
        }
        if (!all_finite(d))
            return fail(DivergenceCause::Overflow);
        theta = theta + d;
        trace.iterates.push_back(theta);
        trace.steps.push_back(d);
        if (auto c = eval(); c != DivergenceCause::None)
            return fail(c);
        if (!all_finite(theta))
            return fail(DivergenceCause::Overflow);
        if (norm2(d) <= tol.rel_step) {
            trace.status = SolveStatus::ok();
            return trace;
        }
    }
}

} // namespace detail

inline FitTrace gauss_newton(const FitModel& model, const Observations& obs, const Vector& theta0,
                             const Tolerances& tol = fit_tolerances())
{
    return detail::fit_loop(model, obs, theta0, tol, [&](const Vector& theta, const Vector& r) {
        return gauss_newton_step(model, obs, theta, r);
    });
}

inline FitTrace corrected_gauss_newton(const FitModel& model, const Observations& obs, const Vector& theta0,
                                       const Tolerances& tol = fit_tolerances())
{
    return detail::fit_loop(model, obs, theta0, tol, [&](const Vector& theta, const Vector& r) {
        return corrected_gauss_newton_step(model, obs, theta, r);
    });
}

enum class FitMethod { GaussNewton, CorrectedGaussNewton };

inline FitTrace fit(FitMethod method, const FitModel& model, const Observations& obs, const Vector& theta0,
                    const Tolerances& tol = fit_tolerances())
{
    return method == FitMethod::GaussNewton ? gauss_newton(model, obs, theta0, tol)
                                            : corrected_gauss_newton(model, obs, theta0, tol);
}

// ---------------------------------------------------------------------------
// Synthetic data.

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

inline double rms(std::span<const double> v)
{
    if (v.empty())
        return 0.0;
    return norm2(v) / std::sqrt(static_cast<double>(v.size()));
}

// Additive zero-mean Gaussian noise with
// sigma = RMS(clean outputs) * 10^(-snr_db / 20).
inline double noise_sigma(std::span<const double> clean, double snr_db)
{
    return rms(clean) * std::pow(10.0, -snr_db / 20.0);
}

inline Observations generate_observations(const FitModel& model, std::span<const Interval> ranges, std::size_t n,
                                          std::optional<double> snr_db, RngSeed seed)
{
    if (!model.true_params)
        throw std::invalid_argument("model " + model.name + " has no true parameters");
    if (ranges.size() != model.input_dims)
        throw DimensionMismatch("sampling ranges do not match model inputs");

    Observations obs;
    obs.snr_db = snr_db;
    const auto unit = lhs_sample(model.input_dims, n, derive_seed(seed, 0));
    obs.inputs.reserve(n);
    obs.outputs.reserve(n);
    for (const auto& u : unit) {
        Vector x(u.size());
        for (std::size_t d = 0; d < u.size(); ++d)
            x[d] = ranges[d].lo + (ranges[d].hi - ranges[d].lo) * u[d];
        obs.outputs.push_back(detail::checked_eval(model, x, *model.true_params));
        obs.inputs.push_back(std::move(x));
    }
    if (snr_db) {
        const double sigma = noise_sigma(obs.outputs, *snr_db);
        Rng rng(derive_seed(seed, 1));
        for (double& y : obs.outputs)
            y += sigma * rng.normal();
    }
    return obs;
}

// `count` initial guesses at Euclidean distance `distance` from theta_star,
// directions taken from an LHS design mapped to [-1, 1]^p and normalised.
inline std::vector<Vector> initial_guesses_at_distance(const Vector& theta_star, double distance, std::size_t count,
                                                       RngSeed seed)
{
    if (distance < 0.0)
        throw std::invalid_argument("distance must be non-negative");
    const std::size_t p = theta_star.size();
    const auto unit = lhs_sample(p, count, seed);
    std::vector<Vector> out;
    out.reserve(count);
    for (const auto& u : unit) {
        Vector dir(p);
        for (std::size_t j = 0; j < p; ++j)
            dir[j] = 2.0 * u[j] - 1.0;
        double len = norm2(dir);
        if (len == 0.0) {
            dir.assign(p, 0.0);
            dir[0] = 1.0;
            len = 1.0;
        }
        Vector g = theta_star;
        if (distance > 0.0)
            for (std::size_t j = 0; j < p; ++j)
                g[j] += distance * dir[j] / len;
        out.push_back(std::move(g));
    }
    return out;
}

inline Vector initial_guess_at_distance(const Vector& theta_star, double distance, RngSeed seed)
{
    return initial_guesses_at_distance(theta_star, distance, 1, seed).front();
}

} // namespace nonlin
