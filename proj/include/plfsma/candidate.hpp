#pragma once

#include <optional>
#include <vector>

#include "plfsma/fpca.hpp"
#include "plfsma/numerics.hpp"

namespace plfsma {

/// Which scalar columns enter linearly and which transformed scores enter the
/// kernel part. A bandwidth of nullopt means the rule-of-thumb value for the
/// sample size at fit time.
struct CandidateSpec {
    std::vector<std::size_t> z_cols;
    std::vector<std::size_t> xi_cols;
    std::optional<double> bandwidth;

    std::size_t size() const { return z_cols.size() + xi_cols.size(); }

    // xi_cols non-empty, indices unique and below the given column counts.
    void validate(std::size_t z_available, std::size_t xi_available) const;
};

/// Everything needed to evaluate a fitted candidate at new points.
struct CandidatePredictor {
    CandidateSpec spec;
    double bandwidth = 0.0;
    Vector theta;
    Matrix kernel_points;    // training scores restricted to spec.xi_cols
    Vector partial_residual; // y - Z_m theta on the training sample

    struct Output {
        Vector values;
        std::vector<bool> fallback;  // true where no training point fell in the kernel window
    };

    /// z_new and xi_new carry all columns; the spec's indices select from them.
    Output predict(const Matrix& z_new, const Matrix& xi_new) const;
};

struct CandidateFit {
    CandidateSpec spec;
    double bandwidth = 0.0;
    Vector theta;
    Matrix hat;
    Vector fitted;
    Vector residuals;
    double trace_hat = 0.0;
    bool collinear = false;
    Eigen::Index rank = 0;
    Matrix projection_basis;  // orthonormal basis of the partialled-out design's column space
    Matrix kernel_points;
    Vector partial_residual;

    Eigen::Index samples() const { return fitted.size(); }
    CandidatePredictor predictor() const;
};

/// Speckman-type fit: partial the smoother out of y and Z_m, least squares for
/// theta, Nadaraya-Watson for the nonparametric part. The hat matrix is
/// P = Pbar (I - K) + K with Pbar the projection onto (I - K) Z_m.
CandidateFit fit_candidate(const Vector& y, const Matrix& z, const Matrix& xi, const CandidateSpec& spec);

inline CandidateFit fit_candidate(const Vector& y, const Matrix& z, const ScoreMatrix& scores, const CandidateSpec& spec)
{
    return fit_candidate(y, z, scores.transformed, spec);
}

std::vector<CandidateFit> fit_candidates(const Vector& y, const Matrix& z, const Matrix& xi,
                                         const std::vector<CandidateSpec>& specs, std::size_t threads = 1);

struct HatDiagnostics {
    double lambda_max = 0.0;           // largest singular value of the hat matrix
    double projection_residual = 0.0;  // max |Pbar^2 - Pbar|, zero when p_m = 0
};

HatDiagnostics hat_diagnostics(const CandidateFit& fit);

/// Largest singular value by power iteration on A^T A.
double largest_singular_value(const Matrix& a);

}  // namespace plfsma
