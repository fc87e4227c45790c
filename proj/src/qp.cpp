#include "plfsma/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace plfsma {

namespace {

struct Repaired {
    Matrix gram;
    double lambda_max = 0.0;
};

// Symmetrise and clip roundoff-level negative eigenvalues.
Repaired repair_gram(const Matrix& gram)
{
    const double scale = gram.cwiseAbs().maxCoeff();
    require((gram - gram.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(scale, 1.0),
            "SimplexQP: gram matrix is not symmetric");
    Repaired out;
    out.gram = 0.5 * (gram + gram.transpose());
    if (scale == 0.0) {
        return out;
    }
    const EigenDecomposition eig = sym_eigen(out.gram);
    out.lambda_max = std::max(eig.values[0], 0.0);
    const double lambda_min = eig.values[eig.values.size() - 1];
    require(lambda_min >= -1e-8 * std::max(out.lambda_max, std::numeric_limits<double>::min()),
            "SimplexQP: gram matrix is not positive semidefinite");
    if (lambda_min < 0.0) {
        const Vector clipped = eig.values.cwiseMax(0.0);
        out.gram = eig.vectors * clipped.asDiagonal() * eig.vectors.transpose();
        out.gram = 0.5 * (out.gram + out.gram.transpose()).eval();
    }
    return out;
}

double objective(const Matrix& g, const Vector& b, const Vector& w)
{
    return w.dot(g * w) + 2.0 * w.dot(b);
}

Vector gradient(const Matrix& g, const Vector& b, const Vector& w)
{
    return 2.0 * (g * w + b);
}

double kkt(const Matrix& g, const Vector& b, const Vector& w)
{
    const Vector grad = gradient(g, b, w);
    double mu = 0.0;
    int support = 0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0) {
            mu += grad[i];
            ++support;
        }
    }
    if (support == 0) {
        return std::numeric_limits<double>::infinity();
    }
    mu /= support;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double gap = w[i] > 0.0 ? std::abs(grad[i] - mu) : std::max(0.0, mu - grad[i]);
        worst = std::max(worst, gap);
    }
    return worst / (1.0 + grad.cwiseAbs().maxCoeff());
}

// Minimiser of the objective over {sum(w) = 1, w_i = 0 off support}, if it
// exists and is non-negative.
std::optional<Vector> polish(const Matrix& g, const Vector& b, const Vector& w)
{
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0) {
            support.push_back(i);
        }
    }
    const auto s = static_cast<Eigen::Index>(support.size());
    if (s == 0) {
        return std::nullopt;
    }
    Matrix system = Matrix::Zero(s + 1, s + 1);
    Vector rhs(s + 1);
    for (Eigen::Index a = 0; a < s; ++a) {
        for (Eigen::Index c = 0; c < s; ++c) {
            system(a, c) = 2.0 * g(support[a], support[c]);
        }
        system(a, s) = -1.0;
        system(s, a) = 1.0;
        rhs[a] = -2.0 * b[support[a]];
    }
    rhs[s] = 1.0;
    const Vector sol = lstsq(system, rhs);
    const double residual = (system * sol - rhs).norm();
    if (!(residual <= 1e-9 * (1.0 + rhs.norm() + system.norm() * sol.norm()))) {
        return std::nullopt;
    }
    Vector out = Vector::Zero(w.size());
    for (Eigen::Index a = 0; a < s; ++a) {
        if (sol[a] < -1e-13) {
            return std::nullopt;
        }
        out[support[a]] = std::max(sol[a], 0.0);
    }
    const double total = out.sum();
    if (!(total > 0.0)) {
        return std::nullopt;
    }
    return out / total;
}

Vector normalise(Vector w)
{
    w = w.cwiseMax(0.0);
    const double total = w.sum();
    return w / total;
}

}  // namespace

double qp_objective(const SimplexQP& problem, const Vector& w)
{
    return objective(problem.gram, problem.linear, w);
}

double kkt_residual(const SimplexQP& problem, const Vector& w)
{
    return kkt(problem.gram, problem.linear, w);
}

Vector project_to_simplex(const Vector& v)
{
    const Eigen::Index m = v.size();
    require(m >= 1, "project_to_simplex: empty vector");
    std::vector<double> sorted(v.data(), v.data() + m);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0;
    double tau = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
        cumulative += sorted[static_cast<std::size_t>(k)];
        const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
        if (sorted[static_cast<std::size_t>(k)] - candidate > 0.0) {
            tau = candidate;
        }
    }
    return (v.array() - tau).cwiseMax(0.0).matrix();
}

WeightVector solve_simplex_qp(const SimplexQP& problem, const QpOptions& options)
{
    const Eigen::Index m = problem.size();
    require(m >= 1, "solve_simplex_qp: empty problem");
    require(problem.gram.rows() == m && problem.gram.cols() == m, "solve_simplex_qp: gram/linear size mismatch");
    require_finite(problem.gram, "SimplexQP gram");
    require_finite(problem.linear, "SimplexQP linear");

    const Repaired repaired = repair_gram(problem.gram);
    const Matrix& g = repaired.gram;
    const Vector& b = problem.linear;
    const std::size_t max_iter =
        options.max_iter.value_or(10 * static_cast<std::size_t>(m) * static_cast<std::size_t>(m) + 1000);

    WeightVector out;
    Vector w = Vector::Constant(m, 1.0 / static_cast<double>(m));
    double f = objective(g, b, w);
    Vector grad = gradient(g, b, w);
    if (options.record_trace) {
        out.trace.push_back(f);
    }

    const double lipschitz = 2.0 * std::max(repaired.lambda_max, 1e-300);
    double step = 1.0 / lipschitz;
    bool converged = kkt(g, b, w) <= options.tol;
    std::size_t iter = 0;

    auto accept = [&](Vector next, double f_next) {
        w = std::move(next);
        f = f_next;
        grad = gradient(g, b, w);
        if (options.record_trace) {
            out.trace.push_back(f);
        }
    };

    while (!converged && iter < max_iter) {
        ++iter;

        Vector next = project_to_simplex(w - step * grad);
        double f_next = objective(g, b, next);
        int halvings = 0;
        while (f_next > f && halvings < 60) {
            step *= 0.5;
            next = project_to_simplex(w - step * grad);
            f_next = objective(g, b, next);
            ++halvings;
        }
        if (f_next > f) {
            break;  // no descent available at working precision
        }

        const Vector s = next - w;
        const Vector old_grad = grad;
        accept(std::move(next), f_next);
        const Vector y = grad - old_grad;
        const double sy = s.dot(y);
        const double ss = s.squaredNorm();
        step = (sy > 0.0 && ss > 0.0) ? ss / sy : 1.0 / lipschitz;
        step = std::clamp(step, 1e-12 / lipschitz, 1e12 / lipschitz);

        if (auto polished = polish(g, b, w)) {
            const double f_pol = objective(g, b, *polished);
            if (f_pol <= f + 1e-14 * (1.0 + std::abs(f))) {
                accept(std::move(*polished), f_pol);
            }
        }
        converged = kkt(g, b, w) <= options.tol;
        if (ss == 0.0 && !converged) {
            break;
        }
    }

    out.weights = normalise(w);
    out.objective = qp_objective(problem, out.weights);
    out.iterations = iter;
    out.converged = kkt(g, b, out.weights) <= options.tol;
    for (Eigen::Index i = 0; i < m; ++i) {
        if (out.weights[i] == 0.0) {
            out.active_set.push_back(static_cast<std::size_t>(i));
        }
    }
    return out;
}

}  // namespace plfsma
