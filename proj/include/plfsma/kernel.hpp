#pragma once

#include <vector>

#include "plfsma/numerics.hpp"

namespace plfsma {

// 3/4 (1 - u^2) on |u| <= 1, zero outside.
double epanechnikov(double u);

// Rule-of-thumb bandwidth n^{-1/(1+q)}.
double rot_bandwidth(std::size_t n, std::size_t q);

/// Row-stochastic Nadaraya-Watson weights over transformed scores.
struct SmootherMatrix {
    Matrix entries;  // n x n
    double bandwidth = 0.0;
    std::vector<std::size_t> score_cols;
};

/// Product-Epanechnikov weight between two points with a shared bandwidth.
double product_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
                      double bandwidth);

/// K_ij = prod_l k((x_il - x_jl) / h), each row normalised to sum to one.
/// `points` is n x q with entries in [0, 1]. The diagonal weight k(0)^q keeps
/// every denominator positive.
SmootherMatrix build_smoother(const Matrix& points, double bandwidth);

}  // namespace plfsma
