#pragma once

// Dense linear algebra aliases, activations, spectral radius and seeded
// random streams shared by every model in the library.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace rnnfc {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Elementwise logistic sigmoid 1 / (1 + exp(-x)).
template <typename Derived>
auto logistic(const Eigen::MatrixBase<Derived>& v)
{
    using Scalar = typename Derived::Scalar;
    return v.unaryExpr([](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); });
}

/// Elementwise hyperbolic tangent.
template <typename Derived>
auto tanh_act(const Eigen::MatrixBase<Derived>& v)
{
    using Scalar = typename Derived::Scalar;
    return v.unaryExpr([](Scalar x) { return std::tanh(x); });
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Seeded random stream. Equal (seed, stream) pairs replay the same draws;
/// child streams for parallel work are derived with split().
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_{seed}, stream_{stream}
    {
        const std::uint64_t a = detail::splitmix64(seed);
        const std::uint64_t b = detail::splitmix64(a ^ detail::splitmix64(stream + 0x632BE59BD9B4E019ULL));
        std::seed_seq seq{
          static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
        engine_.seed(seq);
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform draw on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on the closed range [lo, hi].
    long uniform_int(long lo, long hi)
    {
        std::uniform_int_distribution<long> dist{lo, hi};
        return dist(engine_);
    }

    double normal(double mean = 0.0, double stddev = 1.0)
    {
        std::normal_distribution<double> dist{mean, stddev};
        return dist(engine_);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Independent child stream; does not advance this stream.
    RngStream split(std::uint64_t id) const
    {
        return RngStream{detail::splitmix64(seed_ ^ detail::splitmix64(stream_)), id};
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

/// Matrix with entries drawn uniformly from [lo, hi).
inline Matrix random_uniform(Index rows, Index cols, double lo, double hi, RngStream& rng)
{
    Matrix m(rows, cols);
    // Column-major fill order is part of the reproducibility contract.
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(lo, hi);
    return m;
}

struct SpectralRadiusOptions {
    int max_iterations = 2000;
    int window = 100;
    double tolerance = 1e-8;
    int krylov_dim = 40;
};

namespace detail {

/// Largest Ritz modulus of A on the Krylov space K_k(A, v) (Arnoldi with one
/// reorthogonalization pass). Exact when the space is invariant.
inline double krylov_radius(const Matrix& a, const Vector& v, Index k)
{
    const Index n = a.rows();
    k = std::min(k, n);
    Matrix q(n, k + 1);
    Matrix h = Matrix::Zero(k + 1, k);
    q.col(0) = v.normalized();
    Index used = k;
    for (Index j = 0; j < k; ++j) {
        Vector w = a * q.col(j);
        for (int pass = 0; pass < 2; ++pass) {
            const Vector c = q.leftCols(j + 1).transpose() * w;
            w -= q.leftCols(j + 1) * c;
            h.col(j).head(j + 1) += c;
        }
        const double beta = w.norm();
        h(j + 1, j) = beta;
        if (beta <= 1e-12 * std::max(h.col(j).head(j + 1).norm(), 1e-300)) {
            used = j + 1;
            break;
        }
        q.col(j + 1) = w / beta;
    }
    Eigen::EigenSolver<Matrix> es(h.topLeftCorner(used, used), false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace detail

/// Spectral radius by normalized power iteration.
///
/// Growth ratios ||A v_k|| are monitored through their geometric mean over
/// the last `window` iterations. Random reservoirs often have a complex
/// dominant pair, or several eigenvalues of nearly equal modulus, so single
/// ratios oscillate or converge very slowly. Every window the iterate seeds a
/// small Krylov space and the largest Ritz modulus on it is the estimate;
/// iteration stops once that estimate repeats.
template <typename Derived>
double spectral_radius(const Eigen::MatrixBase<Derived>& a, const SpectralRadiusOptions& opt = {})
{
    if (a.rows() != a.cols()) throw std::invalid_argument("spectral_radius: matrix must be square");
    const Index n = a.rows();
    if (n == 0) return 0.0;
    const Matrix m = a.template cast<double>();
    if (m.cwiseAbs().maxCoeff() == 0.0) return 0.0;

    // Deterministic start vector with no special alignment.
    Vector v(n);
    RngStream start{0x5EEDULL, 0};
    for (Index i = 0; i < n; ++i) v(i) = 1.0 + 0.5 * start.uniform();
    v.normalize();

    double log_sum = 0.0;
    double last_mean = std::numeric_limits<double>::quiet_NaN();
    double last_ritz = std::numeric_limits<double>::quiet_NaN();
    for (int it = 1; it <= opt.max_iterations; ++it) {
        const Vector w = m * v;
        const double g = w.norm();
        if (g == 0.0) return detail::krylov_radius(m, v, opt.krylov_dim); // nilpotent direction
        log_sum += std::log(g);
        v = w / g;
        if (it % opt.window != 0) continue;

        const double mean = std::exp(log_sum / opt.window);
        log_sum = 0.0;
        const double ritz = detail::krylov_radius(m, v, opt.krylov_dim);
        if (n <= opt.krylov_dim) return ritz; // Krylov space is the whole space
        // A stable geometric mean signals a single dominant eigenvalue; a
        // repeated Ritz modulus covers the oscillating and near-tied cases.
        if (std::abs(ritz - last_ritz) < 1e-4 * opt.tolerance * ritz) return ritz;
        if (std::abs(mean - last_mean) < opt.tolerance * mean && std::abs(mean - ritz) < opt.tolerance * ritz) return ritz;
        last_mean = mean;
        last_ritz = ritz;
    }
    return detail::krylov_radius(m, v, opt.krylov_dim);
}

/// Scale `m` so that its spectral radius equals `target`.
template <typename Derived>
Matrix rescale_to_radius(const Eigen::MatrixBase<Derived>& m, double target)
{
    if (!(target > 0.0)) throw std::invalid_argument("rescale_to_radius: target must be positive");
    const double rho = spectral_radius(m);
    if (!(rho > 0.0)) throw std::domain_error("rescale_to_radius: input has zero spectral radius");
    return m.template cast<double>() * (target / rho);
}

} // namespace rnnfc
