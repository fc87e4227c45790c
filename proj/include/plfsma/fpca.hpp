#pragma once

#include <optional>
#include <vector>

#include "plfsma/numerics.hpp"

namespace plfsma {

/// Dense functional observations: row i holds subject i's values on `grid`.
struct CurveSet {
    std::vector<double> grid;
    Matrix obs;  // n x N

    Eigen::Index subjects() const { return obs.rows(); }
    Eigen::Index points() const { return obs.cols(); }

    // Grid strictly increasing, N >= 4, every value finite.
    void validate() const;
};

/// Mean, eigenvalues and L2-orthonormal eigenfunctions on the grid.
///
/// `eigenvalues` and `eigenfunctions` hold min(n - 1, N) components; values
/// below 1e-12 of the leading one are clipped to zero and do not count toward
/// `retained`.
struct FpcaBasis {
    std::vector<double> grid;
    Vector mean;
    Vector eigenvalues;
    Matrix eigenfunctions;  // K x N, row k is psi_k on the grid
    Eigen::Index retained = 0;
};

struct ScoreMatrix {
    Matrix raw;          // n x K
    Matrix transformed;  // n x K, Phi(raw / sqrt(lambda))
};

/// Median spacing of the grid times two.
double auto_presmooth_bandwidth(std::span<const double> grid);

/// N x N operator mapping raw samples on `grid` to their local-linear
/// Epanechnikov smooth at the same nodes.
Matrix local_linear_smoother(std::span<const double> grid, double bandwidth);

/// Replaces every curve with its local-linear smooth. `bandwidth` of nullopt
/// selects auto_presmooth_bandwidth; anything below the minimum grid spacing
/// is a ConfigError.
CurveSet recover_curves(const CurveSet& raw, std::optional<double> bandwidth);

// Covariance with 1/n normalisation, as used by fit_fpca.
Matrix sample_covariance(const Matrix& curves, const Vector& mean);

FpcaBasis fit_fpca(const CurveSet& curves);

/// Raw scores by trapezoid quadrature against the centred curves, and their
/// Gaussian-CDF transforms. Throws ConfigError if k_max exceeds basis.retained.
ScoreMatrix extract_scores(const FpcaBasis& basis, const CurveSet& curves, Eigen::Index k_max);

/// Inner product of two functions sampled on `grid`, by the trapezoid rule.
double l2_inner(std::span<const double> grid, const Vector& f, const Vector& g);

}  // namespace plfsma
