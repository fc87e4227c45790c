#include "plfsma/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <numeric>
#include <string>
#include <thread>

namespace plfsma {

void require_finite(const Matrix& m, const char* what)
{
    if (!m.allFinite()) {
        throw ContractViolation(std::string(what) + ": non-finite entry");
    }
}

EigenDecomposition sym_eigen(const Matrix& a)
{
    require(a.rows() == a.cols(), "sym_eigen: matrix must be square");
    require_finite(a, "sym_eigen");
    const Eigen::Index n = a.rows();
    const double scale = n > 0 ? a.cwiseAbs().maxCoeff() : 0.0;
    require((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(scale, 1e-300) || scale == 0.0,
            "sym_eigen: matrix is not symmetric");

    Matrix m = 0.5 * (a + a.transpose());
    Matrix v = Matrix::Identity(n, n);
    const double threshold = 1e-12 * m.norm();

    auto off_norm = [&] {
        double s = 0.0;
        for (Eigen::Index q = 1; q < n; ++q) {
            for (Eigen::Index p = 0; p < q; ++p) {
                s += 2.0 * m(p, q) * m(p, q);
            }
        }
        return std::sqrt(s);
    };

    constexpr int kMaxSweeps = 100;
    int sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
        if (off_norm() <= threshold) {
            break;
        }
        for (Eigen::Index p = 0; p + 1 < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (apq == 0.0) {
                    continue;
                }
                const double app = m(p, p);
                const double aqq = m(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (Eigen::Index k = 0; k < n; ++k) {
                    if (k == p || k == q) {
                        continue;
                    }
                    const double akp = m(k, p);
                    const double akq = m(k, q);
                    const double new_kp = c * akp - s * akq;
                    const double new_kq = s * akp + c * akq;
                    m(k, p) = new_kp;
                    m(p, k) = new_kp;
                    m(k, q) = new_kq;
                    m(q, k) = new_kq;
                }
                m(p, p) = app - t * apq;
                m(q, q) = aqq + t * apq;
                m(p, q) = 0.0;
                m(q, p) = 0.0;

                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (sweep == kMaxSweeps && off_norm() > threshold) {
        throw NumericalError("sym_eigen: Jacobi iteration did not converge for " + std::to_string(n) + "x" +
                             std::to_string(n) + " matrix");
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return m(i, i) > m(j, j); });

    EigenDecomposition out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values[k] = m(order[k], order[k]);
        out.vectors.col(k) = v.col(order[k]);
    }
    out.sweeps = sweep;
    return out;
}

LeastSquares lstsq_full(const Matrix& a, const Vector& y)
{
    require(a.rows() == y.size(), "lstsq: row count of design and response differ");
    require_finite(a, "lstsq design");
    require_finite(y, "lstsq response");
    LeastSquares out;
    if (a.cols() == 0) {
        out.coefficients = Vector(0);
        return out;
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
    cod.setThreshold(1e-10);
    cod.compute(a);
    out.coefficients = cod.solve(y);
    out.rank = cod.rank();
    return out;
}

double gauss_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

void require_strictly_increasing(std::span<const double> grid, const char* what)
{
    for (std::size_t j = 1; j < grid.size(); ++j) {
        if (!(grid[j] > grid[j - 1])) {
            throw ContractViolation(std::string(what) + ": grid must be strictly increasing");
        }
    }
}

double trapz(std::span<const double> grid, std::span<const double> values)
{
    require(grid.size() == values.size(), "trapz: grid and values differ in length");
    require_strictly_increasing(grid, "trapz");
    double total = 0.0;
    for (std::size_t j = 1; j < grid.size(); ++j) {
        total += 0.5 * (grid[j] - grid[j - 1]) * (values[j] + values[j - 1]);
    }
    return total;
}

Vector trapezoid_weights(std::span<const double> grid)
{
    require_strictly_increasing(grid, "trapezoid_weights");
    const std::size_t n = grid.size();
    Vector w = Vector::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t j = 1; j < n; ++j) {
        const double half = 0.5 * (grid[j] - grid[j - 1]);
        w[static_cast<Eigen::Index>(j - 1)] += half;
        w[static_cast<Eigen::Index>(j)] += half;
    }
    return w;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed) : seed_(seed)
{
    std::uint64_t x = seed;
    for (auto& word : s_) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        word = z ^ (z >> 31);
    }
}

std::uint64_t RandomStream::next_u64()
{
    const auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RandomStream::uniform()
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform_open()
{
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RandomStream::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
}

std::uint64_t RandomStream::uniform_index(std::uint64_t bound)
{
    require(bound > 0, "uniform_index: bound must be positive");
    const std::uint64_t limit = max() - max() % bound;
    for (;;) {
        const std::uint64_t x = next_u64();
        if (x < limit) {
            return x % bound;
        }
    }
}

RandomStream RandomStream::substream(std::uint64_t index) const
{
    return RandomStream(splitmix64(seed_ ^ splitmix64(index + 1)));
}

std::size_t resolve_threads(std::size_t requested)
{
    if (requested > 0) {
        return requested;
    }
    if (const char* env = std::getenv("PLFSMA_THREADS")) {
        char* end = nullptr;
        const unsigned long parsed = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && parsed > 0) {
            return parsed;
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace plfsma
