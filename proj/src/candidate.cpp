#include "plfsma/candidate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "plfsma/kernel.hpp"

namespace plfsma {

namespace {

Matrix select_columns(const Matrix& m, const std::vector<std::size_t>& cols)
{
    Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out.col(static_cast<Eigen::Index>(c)) = m.col(static_cast<Eigen::Index>(cols[c]));
    }
    return out;
}

// Orthonormal basis for the numerical column space (pivot threshold 1e-10).
Matrix column_space_basis(const Matrix& a)
{
    Eigen::ColPivHouseholderQR<Matrix> qr;
    qr.setThreshold(1e-10);
    qr.compute(a);
    const Eigen::Index rank = qr.rank();
    Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), rank);
    return q;
}

void check_indices(const std::vector<std::size_t>& idx, std::size_t available, const char* what)
{
    std::set<std::size_t> seen;
    for (std::size_t i : idx) {
        if (i >= available) {
            throw ContractViolation(std::string("CandidateSpec: ") + what + " index " + std::to_string(i) +
                                    " out of range (" + std::to_string(available) + " available)");
        }
        if (!seen.insert(i).second) {
            throw ContractViolation(std::string("CandidateSpec: duplicate ") + what + " index " + std::to_string(i));
        }
    }
}

}  // namespace

void CandidateSpec::validate(std::size_t z_available, std::size_t xi_available) const
{
    if (xi_cols.empty()) {
        throw ContractViolation("CandidateSpec: xi_cols non-empty is required");
    }
    check_indices(z_cols, z_available, "z");
    check_indices(xi_cols, xi_available, "xi");
    if (bandwidth && !(*bandwidth > 0.0)) {
        throw ContractViolation("CandidateSpec: bandwidth must be positive");
    }
}

CandidatePredictor CandidateFit::predictor() const
{
    return CandidatePredictor{spec, bandwidth, theta, kernel_points, partial_residual};
}

CandidatePredictor::Output CandidatePredictor::predict(const Matrix& z_new, const Matrix& xi_new) const
{
    require(z_new.rows() == xi_new.rows(), "predict: scalar and score rows differ");
    spec.validate(static_cast<std::size_t>(z_new.cols()), static_cast<std::size_t>(xi_new.cols()));
    const Matrix zm = select_columns(z_new, spec.z_cols);
    const Matrix xm = select_columns(xi_new, spec.xi_cols);

    Output out;
    out.values = zm * theta;
    out.fallback.assign(static_cast<std::size_t>(z_new.rows()), false);
    for (Eigen::Index i = 0; i < xm.rows(); ++i) {
        double num = 0.0;
        double den = 0.0;
        for (Eigen::Index j = 0; j < kernel_points.rows(); ++j) {
            const double k = product_kernel(xm.row(i), kernel_points.row(j), bandwidth);
            num += k * partial_residual[j];
            den += k;
        }
        if (den > 0.0) {
            out.values[i] += num / den;
        } else {
            Eigen::Index nearest = 0;
            (kernel_points.rowwise() - xm.row(i)).rowwise().squaredNorm().minCoeff(&nearest);
            out.values[i] += partial_residual[nearest];
            out.fallback[static_cast<std::size_t>(i)] = true;
        }
    }
    return out;
}

CandidateFit fit_candidate(const Vector& y, const Matrix& z, const Matrix& xi, const CandidateSpec& spec)
{
    const Eigen::Index n = y.size();
    require(z.rows() == n && xi.rows() == n, "fit_candidate: y, z and scores must share the sample size");
    spec.validate(static_cast<std::size_t>(z.cols()), static_cast<std::size_t>(xi.cols()));
    const auto p = static_cast<Eigen::Index>(spec.z_cols.size());
    require(n > p + 1, "fit_candidate: need more observations than parametric terms plus one");
    require_finite(y, "fit_candidate response");

    CandidateFit fit;
    fit.spec = spec;
    fit.kernel_points = select_columns(xi, spec.xi_cols);
    fit.bandwidth = spec.bandwidth.value_or(rot_bandwidth(static_cast<std::size_t>(n), spec.xi_cols.size()));
    const Matrix k = build_smoother(fit.kernel_points, fit.bandwidth).entries;

    if (p == 0) {
        fit.theta = Vector(0);
        fit.hat = k;
        fit.projection_basis = Matrix(n, 0);
        fit.partial_residual = y;
    } else {
        const Matrix zm = select_columns(z, spec.z_cols);
        const Matrix i_minus_k = Matrix::Identity(n, n) - k;
        const Matrix z_tilde = i_minus_k * zm;
        const Vector y_tilde = i_minus_k * y;

        const LeastSquares ls = lstsq_full(z_tilde, y_tilde);
        fit.theta = ls.coefficients;
        fit.rank = ls.rank;
        fit.collinear = ls.rank < p;
        fit.projection_basis = column_space_basis(z_tilde);
        fit.hat = fit.projection_basis * (fit.projection_basis.transpose() * i_minus_k) + k;
        fit.partial_residual = y - zm * fit.theta;
    }

    fit.fitted = fit.hat * y;
    fit.residuals = y - fit.fitted;
    fit.trace_hat = fit.hat.trace();
    return fit;
}

std::vector<CandidateFit> fit_candidates(const Vector& y, const Matrix& z, const Matrix& xi,
                                         const std::vector<CandidateSpec>& specs, std::size_t threads)
{
    std::vector<CandidateFit> fits(specs.size());
    parallel_for(specs.size(), threads, [&](std::size_t m) { fits[m] = fit_candidate(y, z, xi, specs[m]); });
    return fits;
}

double largest_singular_value(const Matrix& a)
{
    if (a.size() == 0) {
        return 0.0;
    }
    Vector v = Vector::Ones(a.cols());
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        v[j] += 1e-3 * static_cast<double>(j % 7);
    }
    v.normalize();
    double sigma = 0.0;
    for (int iter = 0; iter < 2000; ++iter) {
        Vector w = a.transpose() * (a * v);
        const double norm = w.norm();
        if (norm == 0.0) {
            return 0.0;
        }
        const double next = std::sqrt(norm);
        w /= norm;
        const bool done = std::abs(next - sigma) <= 1e-13 * next;
        sigma = next;
        v = std::move(w);
        if (done) {
            break;
        }
    }
    return sigma;
}

HatDiagnostics hat_diagnostics(const CandidateFit& fit)
{
    HatDiagnostics out;
    out.lambda_max = largest_singular_value(fit.hat);
    if (fit.projection_basis.cols() > 0) {
        const Matrix pbar = fit.projection_basis * fit.projection_basis.transpose();
        out.projection_residual = (pbar * pbar - pbar).cwiseAbs().maxCoeff();
    }
    return out;
}

}  // namespace plfsma
