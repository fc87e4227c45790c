#pragma once

#include <optional>
#include <vector>

#include "plfsma/numerics.hpp"

namespace plfsma {

/// minimize w' G w + 2 w' b  subject to  sum(w) = 1, w >= 0.
struct SimplexQP {
    Matrix gram;    // M x M, symmetric positive semidefinite
    Vector linear;  // M

    Eigen::Index size() const { return linear.size(); }
};

struct QpOptions {
    double tol = 1e-10;
    std::optional<std::size_t> max_iter;  // default 10 M^2 + 1000
    bool record_trace = false;
};

struct WeightVector {
    Vector weights;
    double objective = 0.0;
    std::size_t iterations = 0;
    std::vector<std::size_t> active_set;  // indices with zero weight
    bool converged = true;
    std::vector<double> trace;            // objective per accepted iterate, if requested
};

double qp_objective(const SimplexQP& problem, const Vector& w);

/// Scaled KKT violation: with g = 2(G w + b) and mu the mean of g over the
/// support, the largest of |g_i - mu| on the support and (mu - g_i)_+ off it,
/// divided by 1 + max|g|.
double kkt_residual(const SimplexQP& problem, const Vector& w);

/// Euclidean projection onto the probability simplex (sort-based).
Vector project_to_simplex(const Vector& v);

/// Projected gradient with Barzilai-Borwein steps and monotone backtracking,
/// polished by an equality-constrained solve on the current support. Always
/// returns a feasible point; `converged` is false if the KKT tolerance was not
/// reached within the iteration budget.
WeightVector solve_simplex_qp(const SimplexQP& problem, const QpOptions& options = {});

}  // namespace plfsma
