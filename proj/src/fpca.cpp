#include "plfsma/fpca.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plfsma/kernel.hpp"

namespace plfsma {

void CurveSet::validate() const
{
    require(static_cast<Eigen::Index>(grid.size()) == obs.cols(), "CurveSet: grid length differs from column count");
    require(grid.size() >= 4, "CurveSet: at least 4 grid points are required");
    require_strictly_increasing(grid, "CurveSet");
    require_finite(obs, "CurveSet observations");
}

double auto_presmooth_bandwidth(std::span<const double> grid)
{
    require(grid.size() >= 2, "auto_presmooth_bandwidth: grid too short");
    std::vector<double> gaps(grid.size() - 1);
    for (std::size_t j = 1; j < grid.size(); ++j) {
        gaps[j - 1] = grid[j] - grid[j - 1];
    }
    const std::size_t mid = gaps.size() / 2;
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(mid), gaps.end());
    double median = gaps[mid];
    if (gaps.size() % 2 == 0) {
        const double lower = *std::max_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + lower);
    }
    return 2.0 * median;
}

Matrix local_linear_smoother(std::span<const double> grid, double bandwidth)
{
    require(bandwidth > 0.0, "local_linear_smoother: bandwidth must be positive");
    const auto n = static_cast<Eigen::Index>(grid.size());
    Matrix s = Matrix::Zero(n, n);
    std::vector<double> w(grid.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t0 = grid[static_cast<std::size_t>(i)];
        double s0 = 0.0, s1 = 0.0, s2 = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = grid[static_cast<std::size_t>(j)] - t0;
            const double wj = epanechnikov(d / bandwidth);
            w[static_cast<std::size_t>(j)] = wj;
            s0 += wj;
            s1 += wj * d;
            s2 += wj * d * d;
        }
        const double det = s0 * s2 - s1 * s1;
        if (det > 1e-12 * s0 * s2) {
            for (Eigen::Index j = 0; j < n; ++j) {
                const double d = grid[static_cast<std::size_t>(j)] - t0;
                s(i, j) = w[static_cast<std::size_t>(j)] * (s2 - s1 * d) / det;
            }
        } else {
            // Only the node itself carries weight: local-constant fallback.
            for (Eigen::Index j = 0; j < n; ++j) {
                s(i, j) = w[static_cast<std::size_t>(j)] / s0;
            }
        }
    }
    return s;
}

CurveSet recover_curves(const CurveSet& raw, std::optional<double> bandwidth)
{
    raw.validate();
    double min_gap = raw.grid[1] - raw.grid[0];
    for (std::size_t j = 2; j < raw.grid.size(); ++j) {
        min_gap = std::min(min_gap, raw.grid[j] - raw.grid[j - 1]);
    }
    const double h = bandwidth.value_or(auto_presmooth_bandwidth(raw.grid));
    if (!(h >= min_gap)) {
        throw ConfigError("presmoothing bandwidth " + std::to_string(h) + " is below the minimum grid spacing " +
                          std::to_string(min_gap));
    }
    const Matrix smoother = local_linear_smoother(raw.grid, h);
    CurveSet out;
    out.grid = raw.grid;
    out.obs = raw.obs * smoother.transpose();
    return out;
}

Matrix sample_covariance(const Matrix& curves, const Vector& mean)
{
    const Matrix centered = curves.rowwise() - mean.transpose();
    return (centered.transpose() * centered) / static_cast<double>(curves.rows());
}

double l2_inner(std::span<const double> grid, const Vector& f, const Vector& g)
{
    require(f.size() == g.size(), "l2_inner: length mismatch");
    const Vector prod = f.cwiseProduct(g);
    return trapz(grid, as_span(prod));
}

FpcaBasis fit_fpca(const CurveSet& curves)
{
    curves.validate();
    const Eigen::Index n = curves.subjects();
    const Eigen::Index points = curves.points();
    require(n >= 2, "fit_fpca: at least two curves are required");

    FpcaBasis basis;
    basis.grid = curves.grid;
    basis.mean = curves.obs.colwise().mean().transpose();

    const Matrix cov = sample_covariance(curves.obs, basis.mean);
    const Vector w = trapezoid_weights(curves.grid);
    const Vector root_w = w.cwiseSqrt();
    const Matrix weighted = root_w.asDiagonal() * cov * root_w.asDiagonal();
    const EigenDecomposition eig = sym_eigen(weighted);

    const Eigen::Index k = std::min(n - 1, points);
    const double leading = std::max(eig.values[0], 0.0);
    basis.eigenvalues.resize(k);
    basis.eigenfunctions.resize(k, points);
    basis.retained = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
        double lambda = eig.values[c];
        if (leading <= 0.0 || lambda <= 1e-12 * leading) {
            lambda = 0.0;
        } else {
            ++basis.retained;
        }
        basis.eigenvalues[c] = lambda;

        Vector psi = eig.vectors.col(c).cwiseQuotient(root_w);
        const double integral = w.dot(psi);
        double sign = 1.0;
        if (std::abs(integral) > 1e-10) {
            sign = integral < 0.0 ? -1.0 : 1.0;
        } else {
            const double cutoff = 1e-10 * psi.cwiseAbs().maxCoeff();
            for (Eigen::Index j = 0; j < points; ++j) {
                if (std::abs(psi[j]) > cutoff) {
                    sign = psi[j] < 0.0 ? -1.0 : 1.0;
                    break;
                }
            }
        }
        basis.eigenfunctions.row(c) = sign * psi.transpose();
    }
    return basis;
}

ScoreMatrix extract_scores(const FpcaBasis& basis, const CurveSet& curves, Eigen::Index k_max)
{
    curves.validate();
    require(curves.grid == basis.grid, "extract_scores: curves are not on the basis grid");
    require(k_max >= 1, "extract_scores: k_max must be at least 1");
    if (k_max > basis.retained) {
        throw ConfigError("requested " + std::to_string(k_max) + " FPC scores but only " +
                          std::to_string(basis.retained) + " components are available");
    }
    const Vector w = trapezoid_weights(curves.grid);
    const Matrix centered = curves.obs.rowwise() - basis.mean.transpose();
    const Matrix psi = basis.eigenfunctions.topRows(k_max);

    ScoreMatrix out;
    out.raw = centered * w.asDiagonal() * psi.transpose();
    out.transformed.resize(out.raw.rows(), k_max);
    for (Eigen::Index c = 0; c < k_max; ++c) {
        const double root_lambda = std::sqrt(basis.eigenvalues[c]);
        for (Eigen::Index i = 0; i < out.raw.rows(); ++i) {
            out.transformed(i, c) = gauss_cdf(out.raw(i, c) / root_lambda);
        }
    }
    return out;
}

}  // namespace plfsma
