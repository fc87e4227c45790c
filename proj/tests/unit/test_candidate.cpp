#include <doctest.h>

#include <cmath>
#include <vector>

#include "plfsma/candidate.hpp"
#include "plfsma/kernel.hpp"
#include "plfsma/simulate.hpp"

using namespace plfsma;

namespace {

struct Toy {
    Vector y;
    Matrix z;
    Matrix xi;
};

Toy toy_data(Eigen::Index n, Eigen::Index p, Eigen::Index q, RandomStream& rng)
{
    Toy t{Vector(n), Matrix(n, p), Matrix(n, q)};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) {
            t.z(i, j) = rng.normal();
        }
        for (Eigen::Index j = 0; j < q; ++j) {
            t.xi(i, j) = rng.uniform_open();
        }
        t.y[i] = (p > 0 ? t.z(i, 0) : 0.0) + std::sin(3.0 * t.xi(i, 0)) + 0.3 * rng.normal();
    }
    return t;
}

CandidateSpec spec(std::vector<std::size_t> z, std::vector<std::size_t> xi, std::optional<double> h = {})
{
    return CandidateSpec{std::move(z), std::move(xi), h};
}

}  // namespace

TEST_CASE("CandidateSpec validation")
{
    CHECK_NOTHROW(spec({0, 1}, {0}).validate(2, 1));
    try {
        spec({0}, {}).validate(2, 2);
        FAIL("expected rejection");
    } catch (const ContractViolation& e) {
        CHECK(std::string(e.what()).find("xi_cols non-empty") != std::string::npos);
    }
    CHECK_THROWS_AS(spec({2}, {0}).validate(2, 1), ContractViolation);
    CHECK_THROWS_AS(spec({0}, {1}).validate(2, 1), ContractViolation);
    CHECK_THROWS_AS(spec({0, 0}, {0}).validate(2, 1), ContractViolation);
    CHECK_THROWS_AS(spec({0}, {0}, -0.1).validate(2, 1), ContractViolation);
}

TEST_CASE("pure nonparametric candidate: hat equals the smoother")
{
    Vector y(3);
    y << 1.0, 2.0, 4.0;
    Matrix xi(3, 1);
    xi << 0.25, 0.5, 0.75;
    const Matrix z(3, 0);
    const auto fit = fit_candidate(y, z, xi, spec({}, {0}, 0.5));
    const Matrix k = build_smoother(xi, 0.5).entries;
    CHECK((fit.hat - k).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((fit.fitted - k * y).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(fit.theta.size() == 0);
    CHECK(hat_diagnostics(fit).projection_residual == 0.0);
}

TEST_CASE("tiny bandwidth drives the hat matrix to the identity")
{
    RandomStream rng(1);
    const Toy t = toy_data(30, 2, 1, rng);
    const auto fit = fit_candidate(t.y, t.z, t.xi, spec({0, 1}, {0}, 1e-9));
    CHECK((fit.hat - Matrix::Identity(30, 30)).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((fit.fitted - fit.hat * t.y).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("fit invariants: fitted, residuals, trace, linearity, constants")
{
    RandomStream rng(2);
    const Toy t = toy_data(80, 3, 2, rng);
    const auto fit = fit_candidate(t.y, t.z, t.xi, spec({0, 2}, {0, 1}));
    CHECK(fit.bandwidth == doctest::Approx(rot_bandwidth(80, 2)));
    CHECK((fit.fitted - fit.hat * t.y).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((fit.residuals - (t.y - fit.fitted)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(fit.trace_hat == doctest::Approx(fit.hat.trace()));

    Vector y2(80);
    for (int i = 0; i < 80; ++i) {
        y2[i] = rng.normal();
    }
    const auto fit2 = fit_candidate(y2, t.z, t.xi, spec({0, 2}, {0, 1}));
    const auto fit_sum = fit_candidate(t.y + y2, t.z, t.xi, spec({0, 2}, {0, 1}));
    CHECK((fit_sum.fitted - fit.fitted - fit2.fitted).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((fit.hat * Vector::Ones(80) - Vector::Ones(80)).cwiseAbs().maxCoeff() <= 1e-10);

    const auto shifted = fit_candidate((t.y.array() + 5.0).matrix(), t.z, t.xi, spec({0, 2}, {0, 1}));
    CHECK(((shifted.fitted - fit.fitted).array() - 5.0).abs().maxCoeff() <= 1e-8);
}

TEST_CASE("theta agrees with the textbook partialled-out estimator")
{
    RandomStream rng(3);
    const Toy t = toy_data(60, 2, 1, rng);
    const auto fit = fit_candidate(t.y, t.z, t.xi, spec({0, 1}, {0}));
    const Matrix k = build_smoother(t.xi, fit.bandwidth).entries;
    const Matrix i_k = Matrix::Identity(60, 60) - k;
    const Matrix zh = i_k * t.z;
    const Vector theta = (zh.transpose() * zh).ldlt().solve(zh.transpose() * i_k * t.y);
    CHECK((fit.theta - theta).cwiseAbs().maxCoeff() <= 1e-9);
    const Vector fitted = t.z * theta + k * (t.y - t.z * theta);
    CHECK((fit.fitted - fitted).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("projection is idempotent and symmetric")
{
    RandomStream rng(4);
    const Toy t = toy_data(70, 3, 2, rng);
    const auto fit = fit_candidate(t.y, t.z, t.xi, spec({0, 1, 2}, {1}));
    const auto diag = hat_diagnostics(fit);
    CHECK(diag.projection_residual <= 1e-8);
    const Matrix pbar = fit.projection_basis * fit.projection_basis.transpose();
    CHECK((pbar - pbar.transpose()).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((pbar * pbar - pbar).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(diag.lambda_max > 0.0);
}

TEST_CASE("column scaling rescales theta and leaves fits unchanged")
{
    RandomStream rng(5);
    const Toy t = toy_data(50, 2, 1, rng);
    Matrix z2 = t.z;
    z2.col(1) *= 4.0;
    const auto a = fit_candidate(t.y, t.z, t.xi, spec({0, 1}, {0}));
    const auto b = fit_candidate(t.y, z2, t.xi, spec({0, 1}, {0}));
    CHECK(b.theta[1] == doctest::Approx(a.theta[1] / 4.0).epsilon(1e-9));
    CHECK((a.fitted - b.fitted).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("collinear designs fall back to the pseudo-inverse")
{
    RandomStream rng(6);
    Toy t = toy_data(40, 2, 1, rng);
    t.z.col(1) = 2.0 * t.z.col(0);
    const auto fit = fit_candidate(t.y, t.z, t.xi, spec({0, 1}, {0}));
    CHECK(fit.collinear);
    CHECK(fit.rank == 1);
    CHECK((fit.fitted - fit.hat * t.y).cwiseAbs().maxCoeff() <= 1e-8);
    const auto single = fit_candidate(t.y, t.z, t.xi, spec({0}, {0}));
    CHECK((fit.fitted - single.fitted).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("dimension checks")
{
    RandomStream rng(7);
    const Toy t = toy_data(10, 2, 1, rng);
    CHECK_THROWS_AS(fit_candidate(t.y.head(9), t.z, t.xi, spec({0}, {0})), ContractViolation);
    CHECK_THROWS_AS(fit_candidate(t.y, t.z, t.xi, spec({0}, {3})), ContractViolation);
    const Toy small = toy_data(3, 2, 1, rng);
    CHECK_THROWS_AS(fit_candidate(small.y, small.z, small.xi, spec({0, 1}, {0})), ContractViolation);
}

TEST_CASE("predictor reproduces fitted values at the training points")
{
    RandomStream rng(8);
    const Toy t = toy_data(60, 2, 2, rng);
    const auto fit = fit_candidate(t.y, t.z, t.xi, spec({1}, {0, 1}));
    const auto out = fit.predictor().predict(t.z, t.xi);
    CHECK((out.values - fit.fitted).cwiseAbs().maxCoeff() <= 1e-10);
    for (bool f : out.fallback) {
        CHECK_FALSE(f);
    }
}

TEST_CASE("predictor falls back to the nearest training point outside every window")
{
    Vector y(3);
    y << 1.0, 2.0, 3.0;
    Matrix xi(3, 1);
    xi << 0.1, 0.2, 0.3;
    const auto fit = fit_candidate(y, Matrix(3, 0), xi, spec({}, {0}, 0.05));
    Matrix far(1, 1);
    far << 0.9;
    const auto out = fit.predictor().predict(Matrix(1, 0), far);
    CHECK(out.fallback[0]);
    CHECK(out.values[0] == doctest::Approx(fit.partial_residual[2]));
}

TEST_CASE("nonparametric part carries signal in design 1")
{
    DesignConfig config;
    config.design = 1;
    config.n = 400;
    config.r2 = 0.7;
    config.seed = 99;
    RandomStream rng(99);
    const auto sim = gen_design(config, rng);
    Matrix xi = sim.xi.leftCols(3);
    const auto fit = fit_candidate(sim.y, sim.z, xi, spec({0, 1, 2}, {0, 1, 2}));
    const Matrix z3 = sim.z.leftCols(3);
    Matrix design(400, 4);
    design << Vector::Ones(400), z3;
    const Vector ols = design * lstsq(design, sim.y);
    CHECK((fit.fitted - sim.mu).squaredNorm() < (ols - sim.mu).squaredNorm());
}

TEST_CASE("hat matrices stay bounded across the M15A candidates")
{
    DesignConfig config;
    config.design = 1;
    config.n = 200;
    config.seed = 3;
    RandomStream rng(3);
    const auto sim = gen_design(config, rng);
    const auto fits = fit_candidates(sim.y, sim.z, sim.xi.leftCols(3), enumerate_candidates(CandidateSet::M15A), 2);
    double worst = 0.0;
    for (const auto& fit : fits) {
        const auto d = hat_diagnostics(fit);
        worst = std::max(worst, d.lambda_max);
        CHECK(d.projection_residual <= 1e-8);
    }
    CHECK(worst <= 10.0);
}

TEST_CASE("fit_candidates is independent of the thread count")
{
    RandomStream rng(9);
    const Toy t = toy_data(50, 3, 2, rng);
    const std::vector<CandidateSpec> specs{spec({0}, {0}), spec({0, 1}, {0, 1}), spec({2}, {1})};
    const auto a = fit_candidates(t.y, t.z, t.xi, specs, 1);
    const auto b = fit_candidates(t.y, t.z, t.xi, specs, 3);
    for (std::size_t m = 0; m < specs.size(); ++m) {
        CHECK((a[m].fitted - b[m].fitted).cwiseAbs().maxCoeff() == 0.0);
    }
}
