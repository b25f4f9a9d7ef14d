#pragma once

// Dense linear algebra and sampling kernel: small row-major matrices,
// LU with partial pivoting, one-sided Jacobi SVD, Moore-Penrose inverse,
// Latin hypercube sampling and a reproducible 64-bit generator.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nonlin {

using Vector = std::vector<double>;

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularMatrix : public NumericError {
public:
    SingularMatrix() : NumericError("singular matrix") {}
};

class DimensionMismatch : public NumericError {
public:
    using NumericError::NumericError;
};

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    // Row-major construction; rejects non-finite entries.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
        : rows_(rows), cols_(cols), data_(std::move(entries))
    {
        if (data_.size() != rows_ * cols_)
            throw DimensionMismatch("matrix entries do not match shape");
        for (double v : data_)
            if (!std::isfinite(v))
                throw NumericError("non-finite matrix entry");
    }

    static Matrix identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(std::span<const double> d)
    {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i)
            m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::span<const double> entries() const { return data_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    Matrix transpose() const
    {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j)
                t(j, i) = (*this)(i, j);
        return t;
    }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    double max_abs() const
    {
        double m = 0.0;
        for (double v : data_)
            m = std::max(m, std::abs(v));
        return m;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix operator*(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows())
        throw DimensionMismatch("matrix product shape mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0)
                continue;
            for (std::size_t j = 0; j < b.cols(); ++j)
                c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Vector operator*(const Matrix& a, std::span<const double> x)
{
    if (a.cols() != x.size())
        throw DimensionMismatch("matrix-vector shape mismatch");
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j)
            s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

inline Vector operator*(const Matrix& a, const Vector& x)
{
    return a * std::span<const double>(x);
}

inline Matrix operator-(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionMismatch("matrix difference shape mismatch");
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            c(i, j) = a(i, j) - b(i, j);
    return c;
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw DimensionMismatch("dot product length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

// Euclidean norm, scaled to avoid overflow on large entries.
inline double norm2(std::span<const double> v)
{
    double scale = 0.0;
    for (double x : v)
        scale = std::max(scale, std::abs(x));
    if (scale == 0.0 || !std::isfinite(scale))
        return scale;
    double s = 0.0;
    for (double x : v) {
        const double t = x / scale;
        s += t * t;
    }
    return scale * std::sqrt(s);
}

inline bool all_finite(std::span<const double> v)
{
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline Vector operator+(const Vector& a, const Vector& b)
{
    if (a.size() != b.size())
        throw DimensionMismatch("vector sum length mismatch");
    Vector c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        c[i] = a[i] + b[i];
    return c;
}

inline Vector operator-(const Vector& a, const Vector& b)
{
    if (a.size() != b.size())
        throw DimensionMismatch("vector difference length mismatch");
    Vector c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        c[i] = a[i] - b[i];
    return c;
}

inline Vector operator*(double s, const Vector& a)
{
    Vector c(a);
    for (double& v : c)
        v *= s;
    return c;
}

inline constexpr double kPivotTolerance = 1e-14;

// Solves a x = b by LU decomposition with partial pivoting.
inline Vector lu_solve(const Matrix& a, std::span<const double> b)
{
    const std::size_t n = a.rows();
    if (a.cols() != n)
        throw DimensionMismatch("lu_solve needs a square matrix");
    if (b.size() != n)
        throw DimensionMismatch("lu_solve right-hand side length mismatch");

    Matrix lu = a;
    Vector x(b.begin(), b.end());
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(lu(i, k)) > std::abs(lu(p, k)))
                p = i;
        // NaN pivots fail this comparison too
        if (!(std::abs(lu(p, k)) >= kPivotTolerance))
            throw SingularMatrix();
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j)
                std::swap(lu(k, j), lu(p, j));
            std::swap(x[k], x[p]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double m = lu(i, k) / lu(k, k);
            lu(i, k) = m;
            for (std::size_t j = k + 1; j < n; ++j)
                lu(i, j) -= m * lu(k, j);
            x[i] -= m * x[k];
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = x[i];
        for (std::size_t j = i + 1; j < n; ++j)
            s -= lu(i, j) * x[j];
        x[i] = s / lu(i, i);
    }
    return x;
}

inline Vector lu_solve(const Matrix& a, const Vector& b)
{
    return lu_solve(a, std::span<const double>(b));
}

// Thin SVD a = U diag(s) V^T. For an m x n input with m >= n, U is m x n,
// V is n x n. Wide inputs are handled by transposing.
struct Svd {
    Matrix u;
    Vector s;
    Matrix v;
};

namespace detail {

// One-sided Jacobi on the columns of a tall matrix.
inline Svd jacobi_svd_tall(Matrix a)
{
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix v = Matrix::identity(n);
    constexpr double eps = std::numeric_limits<double>::epsilon();

    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += a(i, p) * a(i, p);
                    beta += a(i, q) * a(i, q);
                    gamma += a(i, p) * a(i, q);
                }
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta))
                    continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double ap = a(i, p);
                    const double aq = a(i, q);
                    a(i, p) = c * ap - s * aq;
                    a(i, q) = s * ap + c * aq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p);
                    const double vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated)
            break;
    }

    Vector s(n);
    for (std::size_t j = 0; j < n; ++j) {
        double ss = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            ss += a(i, j) * a(i, j);
        s[j] = std::sqrt(ss);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });

    Svd out{Matrix(m, n), Vector(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.s[k] = s[j];
        for (std::size_t i = 0; i < m; ++i)
            out.u(i, k) = s[j] > 0.0 ? a(i, j) / s[j] : 0.0;
        for (std::size_t i = 0; i < n; ++i)
            out.v(i, k) = v(i, j);
    }
    return out;
}

} // namespace detail

// Singular values are returned in descending order. For wide inputs the
// roles of U and V are swapped so that a = U diag(s) V^T still holds.
inline Svd svd(const Matrix& a)
{
    if (a.rows() >= a.cols())
        return detail::jacobi_svd_tall(a);
    Svd t = detail::jacobi_svd_tall(a.transpose());
    return {std::move(t.v), std::move(t.s), std::move(t.u)};
}

inline double default_singular_cutoff(const Matrix& a, std::span<const double> singular_values)
{
    const double smax = singular_values.empty() ? 0.0 : singular_values.front();
    return static_cast<double>(std::max(a.rows(), a.cols())) * std::numeric_limits<double>::epsilon() * smax;
}

inline Matrix moore_penrose_pinv(const Matrix& a)
{
    const Svd d = svd(a);
    const double cutoff = default_singular_cutoff(a, d.s);
    // a+ = V diag(1/s) U^T, U is rows x k, V is cols x k
    Matrix p(a.cols(), a.rows());
    for (std::size_t k = 0; k < d.s.size(); ++k) {
        if (!(d.s[k] > cutoff))
            continue;
        const double inv = 1.0 / d.s[k];
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double vik = d.v(i, k) * inv;
            if (vik == 0.0)
                continue;
            for (std::size_t j = 0; j < a.rows(); ++j)
                p(i, j) += vik * d.u(j, k);
        }
    }
    return p;
}

// tol < 0 selects the default cutoff max(m,n)*eps*sigma_max.
inline std::size_t matrix_rank(const Matrix& a, double tol = -1.0)
{
    if (a.rows() == 0 || a.cols() == 0)
        return 0;
    const Svd d = svd(a);
    const double cutoff = tol < 0.0 ? default_singular_cutoff(a, d.s) : tol;
    return static_cast<std::size_t>(std::count_if(d.s.begin(), d.s.end(), [&](double s) { return s > cutoff; }));
}

// ---------------------------------------------------------------------------
// Random numbers

struct RngSeed {
    std::uint64_t value = 0;
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Child seed for stream `index` under `parent`, so that independent work
// items get independent streams regardless of evaluation order.
inline constexpr RngSeed derive_seed(RngSeed parent, std::uint64_t index)
{
    return {splitmix64(parent.value ^ splitmix64(index + 0x632be59bd9b4e019ULL))};
}

// xoshiro256** seeded through splitmix64.
class Rng {
public:
    explicit Rng(RngSeed seed)
    {
        std::uint64_t x = seed.value;
        for (auto& s : state_) {
            s = splitmix64(x);
            x += 0x9e3779b97f4a7c15ULL;
        }
    }

    std::uint64_t next()
    {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform index in [0, n).
    std::size_t below(std::size_t n)
    {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n));
    }

    // Standard normal via Box-Muller; the spare value is cached.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Latin hypercube sample of n points in [0,1)^dims: along every axis each of
// the n equal strata holds exactly one point.
inline std::vector<Vector> lhs_sample(std::size_t dims, std::size_t n, RngSeed seed)
{
    if (dims == 0 || n == 0)
        throw std::invalid_argument("lhs_sample needs dims >= 1 and n >= 1");
    Rng rng(seed);
    std::vector<Vector> pts(n, Vector(dims));
    std::vector<std::size_t> perm(n);
    for (std::size_t d = 0; d < dims; ++d) {
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = n; i > 1; --i)
            std::swap(perm[i - 1], perm[rng.below(i)]);
        for (std::size_t i = 0; i < n; ++i) {
            const double stratum = static_cast<double>(perm[i]);
            double v = (stratum + rng.uniform()) / static_cast<double>(n);
            // rounding can land exactly on the upper edge
            v = std::min(v, std::nextafter((stratum + 1.0) / static_cast<double>(n), 0.0));
            pts[i][d] = v;
        }
    }
    return pts;
}

} // namespace nonlin
