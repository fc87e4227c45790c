#include "plfsma/kernel.hpp"

#include <string>
#include <cmath>
#include <numeric>

namespace plfsma {

double epanechnikov(double u)
{
    return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
}

double rot_bandwidth(std::size_t n, std::size_t q)
{
    require(n >= 1 && q >= 1, "rot_bandwidth: n and q must be positive");
    return std::pow(static_cast<double>(n), -1.0 / (1.0 + static_cast<double>(q)));
}

double product_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
                      double bandwidth)
{
    double weight = 1.0;
    for (Eigen::Index l = 0; l < a.size() && weight > 0.0; ++l) {
        weight *= epanechnikov((a[l] - b[l]) / bandwidth);
    }
    return weight;
}

SmootherMatrix build_smoother(const Matrix& points, double bandwidth)
{
    require(bandwidth > 0.0 && std::isfinite(bandwidth), "build_smoother: bandwidth must be positive");
    require(points.cols() >= 1, "build_smoother: at least one score column is required");
    require_finite(points, "build_smoother scores");
    require(points.minCoeff() >= 0.0 && points.maxCoeff() <= 1.0, "build_smoother: scores must lie in [0, 1]");

    const Eigen::Index n = points.rows();
    SmootherMatrix out;
    out.bandwidth = bandwidth;
    out.score_cols.resize(static_cast<std::size_t>(points.cols()));
    std::iota(out.score_cols.begin(), out.score_cols.end(), std::size_t{0});
    out.entries = Matrix::Zero(n, n);

    for (Eigen::Index i = 0; i < n; ++i) {
        out.entries(i, i) = product_kernel(points.row(i), points.row(i), bandwidth);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double k = product_kernel(points.row(i), points.row(j), bandwidth);
            out.entries(i, j) = k;
            out.entries(j, i) = k;
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double total = out.entries.row(i).sum();
        if (!(total > 0.0) || !std::isfinite(total)) {
            throw NumericalError("build_smoother: degenerate kernel row " + std::to_string(i));
        }
        out.entries.row(i) /= total;
    }
    return out;
}

}  // namespace plfsma
