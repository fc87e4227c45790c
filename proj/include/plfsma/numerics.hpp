#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "plfsma/errors.hpp"

namespace plfsma {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline std::span<const double> as_span(const Vector& v)
{
    return {v.data(), static_cast<std::size_t>(v.size())};
}

// Throws ContractViolation if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);

struct EigenDecomposition {
    Vector values;   // non-increasing
    Matrix vectors;  // column k pairs with values[k]
    int sweeps = 0;
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Converges when the off-diagonal Frobenius norm falls below 1e-12 of the
/// input's Frobenius norm; gives up after 100 sweeps with NumericalError.
/// Input must be square and symmetric to 1e-10 of its largest entry.
EigenDecomposition sym_eigen(const Matrix& a);

struct LeastSquares {
    Vector coefficients;
    Eigen::Index rank = 0;
};

/// Least squares via pivoted QR (complete orthogonal decomposition), returning
/// the minimum-norm solution when `a` is rank deficient. Pivots at or below
/// 1e-10 of the largest pivot count as zero.
LeastSquares lstsq_full(const Matrix& a, const Vector& y);

inline Vector lstsq(const Matrix& a, const Vector& y) { return lstsq_full(a, y).coefficients; }

/// Standard normal CDF.
double gauss_cdf(double x);

/// Trapezoidal rule on a strictly increasing grid.
double trapz(std::span<const double> grid, std::span<const double> values);

/// Per-node trapezoid weights, so that trapz(grid, v) == weights . v.
Vector trapezoid_weights(std::span<const double> grid);

void require_strictly_increasing(std::span<const double> grid, const char* what);

/// xoshiro256** seeded through splitmix64.
///
/// Normal draws use Box-Muller on (u1, u2) = (next_open(), next_unit()) and
/// return cos-branch first, then the cached sin-branch value. Child streams are
/// seeded with splitmix64(seed ^ splitmix64(index + 1)), so each worker can
/// own an independent stream that depends only on (master seed, index).
class RandomStream {
public:
    using result_type = std::uint64_t;

    explicit RandomStream(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();
    // [0, 1)
    double uniform();
    // (0, 1]
    double uniform_open();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    // Uniform integer in [0, bound) by rejection; bound > 0.
    std::uint64_t uniform_index(std::uint64_t bound);

    RandomStream substream(std::uint64_t index) const;

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return next_u64(); }

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Every index is
/// processed exactly once; callers write results into slot i, so output order
/// never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn);

// 0 means "use PLFSMA_THREADS, else hardware concurrency".
std::size_t resolve_threads(std::size_t requested);

}  // namespace plfsma

#include "plfsma/detail/parallel.hpp"
