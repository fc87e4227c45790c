#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "plfsma/candidate.hpp"
#include "plfsma/qp.hpp"

namespace plfsma {

enum class Method { MMA, AIC, BIC, SAIC, SBIC, EQUAL };

inline constexpr std::array<Method, 6> kAllMethods{Method::MMA, Method::AIC, Method::BIC,
                                                    Method::SAIC, Method::SBIC, Method::EQUAL};

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);  // case-insensitive

/// Plug-in error variances: squared residuals of the largest candidate.
struct VarianceEstimate {
    Vector diagonal;
    std::size_t source_index = 0;
};

struct InfoScores {
    double aic = 0.0;
    double bic = 0.0;
    bool saturated = false;  // zero residual norm; both scores are -inf
};

struct EnsembleResult {
    Method method = Method::MMA;
    WeightVector weights;
    Vector fitted;
    std::optional<double> criterion_value;  // Mallows criterion at the weights (MMA only)
    std::vector<InfoScores> scores_table;
};

/// Source is the candidate with the largest p_m + q_m, lowest index on ties.
VarianceEstimate estimate_omega(const std::vector<CandidateFit>& fits);

/// Mallows criterion ||y - mu(w)||^2 + 2 sum_m w_m tr(P_m Omega), evaluated
/// directly from the fits.
double mallows_criterion(const std::vector<CandidateFit>& fits, const Vector& y, const VarianceEstimate& omega,
                         const Vector& weights);

/// The simplex QP whose objective equals the Mallows criterion.
SimplexQP mallows_problem(const std::vector<CandidateFit>& fits, const Vector& y, const VarianceEstimate& omega);

EnsembleResult mallows_weights(const std::vector<CandidateFit>& fits, const Vector& y, const VarianceEstimate& omega);

InfoScores info_criteria(const CandidateFit& fit, std::size_t n);

/// Softmax of -score/2, shifted by the minimum score. If any score is -inf the
/// mass is split evenly over those entries.
WeightVector smoothed_weights(const std::vector<double>& scores);

/// MMA, AIC, BIC, SAIC, SBIC and EQUAL, in that order. AIC/BIC pick the
/// smallest score, lowest index on ties.
std::vector<EnsembleResult> run_all_methods(const std::vector<CandidateFit>& fits, const Vector& y);

EnsembleResult combine(Method method, const std::vector<CandidateFit>& fits, WeightVector weights);

struct Prediction {
    Vector values;
    std::vector<bool> fallback;  // any weighted candidate fell back to the nearest training point
};

/// Weighted out-of-sample prediction. xi_new must be transformed scores
/// computed against the training basis.
Prediction predict(const Vector& weights, const std::vector<CandidatePredictor>& candidates, const Matrix& z_new,
                   const Matrix& xi_new);

Prediction predict(const EnsembleResult& result, const std::vector<CandidateFit>& fits, const Matrix& z_new,
                   const Matrix& xi_new);

}  // namespace plfsma
