#include "plfsma/averaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

namespace plfsma {

namespace {

void require_common_size(const std::vector<CandidateFit>& fits, Eigen::Index n)
{
    for (const auto& fit : fits) {
        require(fit.samples() == n, "averaging: candidate fits disagree on the sample size");
    }
}

WeightVector vertex(std::size_t m, std::size_t chosen)
{
    WeightVector w;
    w.weights = Vector::Zero(static_cast<Eigen::Index>(m));
    w.weights[static_cast<Eigen::Index>(chosen)] = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (i != chosen) {
            w.active_set.push_back(i);
        }
    }
    return w;
}

std::size_t argmin_first(const std::vector<double>& v)
{
    return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::string_view method_name(Method m)
{
    switch (m) {
    case Method::MMA: return "MMA";
    case Method::AIC: return "AIC";
    case Method::BIC: return "BIC";
    case Method::SAIC: return "SAIC";
    case Method::SBIC: return "SBIC";
    case Method::EQUAL: return "EQUAL";
    }
    return "?";
}

std::optional<Method> parse_method(std::string_view name)
{
    std::string upper(name);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    for (Method m : kAllMethods) {
        if (method_name(m) == upper) {
            return m;
        }
    }
    return std::nullopt;
}

VarianceEstimate estimate_omega(const std::vector<CandidateFit>& fits)
{
    require(!fits.empty(), "estimate_omega: no candidate fits");
    std::size_t source = 0;
    for (std::size_t m = 1; m < fits.size(); ++m) {
        if (fits[m].spec.size() > fits[source].spec.size()) {
            source = m;
        }
    }
    return VarianceEstimate{fits[source].residuals.array().square().matrix(), source};
}

SimplexQP mallows_problem(const std::vector<CandidateFit>& fits, const Vector& y, const VarianceEstimate& omega)
{
    require(!fits.empty(), "mallows_problem: no candidate fits");
    const Eigen::Index n = y.size();
    require_common_size(fits, n);
    require(omega.diagonal.size() == n, "mallows_problem: variance estimate has the wrong length");

    const auto m = static_cast<Eigen::Index>(fits.size());
    Matrix h(n, m);
    Vector b(m);
    for (Eigen::Index c = 0; c < m; ++c) {
        const auto& fit = fits[static_cast<std::size_t>(c)];
        h.col(c) = y - fit.fitted;
        b[c] = omega.diagonal.dot(fit.hat.diagonal());
    }
    SimplexQP problem;
    problem.gram = h.transpose() * h;
    problem.linear = b;
    return problem;
}

double mallows_criterion(const std::vector<CandidateFit>& fits, const Vector& y, const VarianceEstimate& omega,
                         const Vector& weights)
{
    require(static_cast<std::size_t>(weights.size()) == fits.size(), "mallows_criterion: weight length mismatch");
    Vector mu = Vector::Zero(y.size());
    double penalty = 0.0;
    for (std::size_t m = 0; m < fits.size(); ++m) {
        const double wm = weights[static_cast<Eigen::Index>(m)];
        mu += wm * fits[m].fitted;
        penalty += wm * omega.diagonal.dot(fits[m].hat.diagonal());
    }
    return (y - mu).squaredNorm() + 2.0 * penalty;
}

EnsembleResult combine(Method method, const std::vector<CandidateFit>& fits, WeightVector weights)
{
    require(!fits.empty(), "combine: no candidate fits");
    require(static_cast<std::size_t>(weights.weights.size()) == fits.size(), "combine: weight length mismatch");
    EnsembleResult out;
    out.method = method;
    out.fitted = Vector::Zero(fits.front().samples());
    for (std::size_t m = 0; m < fits.size(); ++m) {
        const double wm = weights.weights[static_cast<Eigen::Index>(m)];
        if (wm != 0.0) {
            out.fitted += wm * fits[m].fitted;
        }
    }
    out.weights = std::move(weights);
    return out;
}

EnsembleResult mallows_weights(const std::vector<CandidateFit>& fits, const Vector& y, const VarianceEstimate& omega)
{
    const SimplexQP problem = mallows_problem(fits, y, omega);
    WeightVector w = solve_simplex_qp(problem);
    const double objective = w.objective;
    EnsembleResult out = combine(Method::MMA, fits, std::move(w));
    out.criterion_value = objective;
    return out;
}

InfoScores info_criteria(const CandidateFit& fit, std::size_t n)
{
    require(n >= 1 && static_cast<Eigen::Index>(n) == fit.samples(), "info_criteria: sample size mismatch");
    const double dn = static_cast<double>(n);
    const double sigma2 = fit.residuals.squaredNorm() / dn;
    InfoScores out;
    if (!(sigma2 > 0.0)) {
        out.aic = -std::numeric_limits<double>::infinity();
        out.bic = out.aic;
        out.saturated = true;
        return out;
    }
    out.aic = std::log(sigma2) + 2.0 * fit.trace_hat / dn;
    out.bic = std::log(sigma2) + std::log(dn) * fit.trace_hat / dn;
    return out;
}

WeightVector smoothed_weights(const std::vector<double>& scores)
{
    require(!scores.empty(), "smoothed_weights: no scores");
    const auto m = static_cast<Eigen::Index>(scores.size());
    WeightVector out;
    out.weights = Vector::Zero(m);

    const double lowest = *std::min_element(scores.begin(), scores.end());
    if (std::isinf(lowest) && lowest < 0.0) {
        for (Eigen::Index i = 0; i < m; ++i) {
            out.weights[i] = scores[static_cast<std::size_t>(i)] == lowest ? 1.0 : 0.0;
        }
    } else {
        for (Eigen::Index i = 0; i < m; ++i) {
            require(std::isfinite(scores[static_cast<std::size_t>(i)]), "smoothed_weights: non-finite score");
            out.weights[i] = std::exp(-0.5 * (scores[static_cast<std::size_t>(i)] - lowest));
        }
    }
    out.weights /= out.weights.sum();
    for (Eigen::Index i = 0; i < m; ++i) {
        if (out.weights[i] == 0.0) {
            out.active_set.push_back(static_cast<std::size_t>(i));
        }
    }
    return out;
}

std::vector<EnsembleResult> run_all_methods(const std::vector<CandidateFit>& fits, const Vector& y)
{
    require(!fits.empty(), "run_all_methods: no candidate fits");
    const auto n = static_cast<std::size_t>(y.size());
    require_common_size(fits, y.size());
    const std::size_t m = fits.size();

    std::vector<InfoScores> table;
    std::vector<double> aic, bic;
    table.reserve(m);
    for (const auto& fit : fits) {
        table.push_back(info_criteria(fit, n));
        aic.push_back(table.back().aic);
        bic.push_back(table.back().bic);
    }

    WeightVector equal;
    equal.weights = Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m));

    std::vector<EnsembleResult> out;
    out.reserve(kAllMethods.size());
    out.push_back(mallows_weights(fits, y, estimate_omega(fits)));
    out.push_back(combine(Method::AIC, fits, vertex(m, argmin_first(aic))));
    out.push_back(combine(Method::BIC, fits, vertex(m, argmin_first(bic))));
    out.push_back(combine(Method::SAIC, fits, smoothed_weights(aic)));
    out.push_back(combine(Method::SBIC, fits, smoothed_weights(bic)));
    out.push_back(combine(Method::EQUAL, fits, std::move(equal)));
    for (auto& result : out) {
        result.scores_table = table;
    }
    return out;
}

Prediction predict(const Vector& weights, const std::vector<CandidatePredictor>& candidates, const Matrix& z_new,
                   const Matrix& xi_new)
{
    require(static_cast<std::size_t>(weights.size()) == candidates.size(), "predict: weight length mismatch");
    Prediction out;
    out.values = Vector::Zero(z_new.rows());
    out.fallback.assign(static_cast<std::size_t>(z_new.rows()), false);
    for (std::size_t m = 0; m < candidates.size(); ++m) {
        const double wm = weights[static_cast<Eigen::Index>(m)];
        if (wm == 0.0) {
            continue;
        }
        const auto single = candidates[m].predict(z_new, xi_new);
        out.values += wm * single.values;
        for (std::size_t i = 0; i < single.fallback.size(); ++i) {
            if (single.fallback[i]) {
                out.fallback[i] = true;
            }
        }
    }
    return out;
}

Prediction predict(const EnsembleResult& result, const std::vector<CandidateFit>& fits, const Matrix& z_new,
                   const Matrix& xi_new)
{
    std::vector<CandidatePredictor> candidates;
    candidates.reserve(fits.size());
    for (const auto& fit : fits) {
        candidates.push_back(fit.predictor());
    }
    return predict(result.weights.weights, candidates, z_new, xi_new);
}

}  // namespace plfsma
