#include "plfsma/simulate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace plfsma {

namespace {

constexpr std::uint64_t kCalibrationStream = std::numeric_limits<std::uint64_t>::max();
constexpr double kMeasurementVariance = 0.2;

struct Subject {
    Vector z;
    Vector zeta;
    Vector xi;
    double mu = 0.0;
    double noise_factor = 1.0;
};

// Fills an AR(1) vector with unit variances and lag-one correlation 0.5.
void draw_ar1(Eigen::Ref<Vector> out, RandomStream& stream)
{
    const double innovation = std::sqrt(0.75);
    out[0] = stream.normal();
    for (Eigen::Index j = 1; j < out.size(); ++j) {
        out[j] = 0.5 * out[j - 1] + innovation * stream.normal();
    }
}

double linear_coefficient(int design, std::size_t j)
{
    const double exponent = design == 2 ? -0.5 : -2.0 / 3.0;
    return std::pow(static_cast<double>(j), exponent);
}

double link(int design, const Vector& xi)
{
    if (design == 2) {
        double f = xi[0] * xi[1] + xi[2] * xi[2];
        for (Eigen::Index k = 3; k < xi.size(); ++k) {
            f += (xi[k] - 0.5) / static_cast<double>(k + 1);
        }
        return f;
    }
    double s = 0.0;
    for (Eigen::Index k = 0; k < xi.size(); ++k) {
        s += xi[k] / static_cast<double>(k + 1);
    }
    return std::exp(s);
}

Subject draw_subject(const DesignShape& shape, RandomStream& stream)
{
    const auto p = static_cast<Eigen::Index>(shape.scalar_count);
    const auto k = static_cast<Eigen::Index>(shape.components);
    Subject s;
    s.z.resize(p);
    s.zeta.resize(k);
    s.xi.resize(k);

    Eigen::Index first_free = 0;
    if (shape.design == 1) {
        draw_ar1(s.z, stream);
    } else {
        Vector joint(p + 1);
        draw_ar1(joint, stream);
        s.zeta[0] = joint[0] * std::sqrt(shape.eigenvalue(1));
        s.z = joint.tail(p);
        first_free = 1;
    }
    for (Eigen::Index c = first_free; c < k; ++c) {
        s.zeta[c] = std::sqrt(shape.eigenvalue(static_cast<std::size_t>(c + 1))) * stream.normal();
    }
    for (Eigen::Index c = 0; c < k; ++c) {
        s.xi[c] = gauss_cdf(s.zeta[c] / std::sqrt(shape.eigenvalue(static_cast<std::size_t>(c + 1))));
    }

    s.mu = link(shape.design, s.xi);
    for (Eigen::Index j = 0; j < p; ++j) {
        s.mu += linear_coefficient(shape.design, static_cast<std::size_t>(j + 1)) * s.z[j];
    }

    if (shape.design == 2) {
        const double u = stream.uniform(-1.0, 1.0);
        s.noise_factor = u * u + 0.01;
    } else if (shape.design == 3) {
        s.noise_factor = s.z[0] * s.z[0] + 0.01;
    }
    return s;
}

std::string upper(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
    return out;
}

std::vector<std::size_t> prefix(std::size_t length)
{
    std::vector<std::size_t> out(length);
    for (std::size_t i = 0; i < length; ++i) {
        out[i] = i;
    }
    return out;
}

std::vector<std::size_t> from_mask(unsigned mask)
{
    std::vector<std::size_t> out;
    for (std::size_t bit = 0; bit < 32; ++bit) {
        if (mask & (1u << bit)) {
            out.push_back(bit);
        }
    }
    return out;
}

Eigen::Index max_score_column(const std::vector<CandidateSpec>& specs)
{
    std::size_t k = 0;
    for (const auto& spec : specs) {
        for (std::size_t c : spec.xi_cols) {
            k = std::max(k, c + 1);
        }
    }
    return static_cast<Eigen::Index>(k);
}

struct FittedSample {
    SimulatedData data;
    std::vector<CandidateFit> fits;
};

FittedSample fit_sample(const DesignConfig& config, double eta, const std::vector<CandidateSpec>& specs,
                        RandomStream& stream)
{
    FittedSample out;
    out.data = gen_design(config, eta, stream);
    const CurveSet recovered = recover_curves(out.data.curves, std::nullopt);
    const FpcaBasis basis = fit_fpca(recovered);
    const ScoreMatrix scores = extract_scores(basis, recovered, max_score_column(specs));
    out.fits = fit_candidates(out.data.y, out.data.z, scores.transformed, specs, 1);
    return out;
}

// min over the simplex of ||sum_m w_m fitted_m - mu||^2.
WeightVector oracle_weights(const std::vector<CandidateFit>& fits, const Vector& mu)
{
    Matrix a(mu.size(), static_cast<Eigen::Index>(fits.size()));
    for (std::size_t m = 0; m < fits.size(); ++m) {
        a.col(static_cast<Eigen::Index>(m)) = fits[m].fitted - mu;
    }
    SimplexQP problem{a.transpose() * a, Vector::Zero(a.cols())};
    return solve_simplex_qp(problem);
}

double loss(const Vector& fitted_values, const Vector& mu)
{
    return (fitted_values - mu).squaredNorm();
}

}  // namespace

std::string_view candidate_set_name(CandidateSet set)
{
    switch (set) {
    case CandidateSet::M15A: return "M15A";
    case CandidateSet::M15B: return "M15B";
    case CandidateSet::M21: return "M21";
    }
    return "?";
}

std::optional<CandidateSet> parse_candidate_set(std::string_view name)
{
    const std::string u = upper(name);
    for (CandidateSet set : {CandidateSet::M15A, CandidateSet::M15B, CandidateSet::M21}) {
        if (candidate_set_name(set) == u) {
            return set;
        }
    }
    return std::nullopt;
}

void DesignConfig::validate() const
{
    if (design < 1 || design > 3) {
        throw ConfigError("design must be 1, 2 or 3 (got " + std::to_string(design) + ")");
    }
    if (!(r2 > 0.0 && r2 < 1.0)) {
        throw ConfigError("r2 must lie strictly inside (0, 1)");
    }
    if (reps < 1) {
        throw ConfigError("reps must be at least 1");
    }
    if (n < 10) {
        throw ConfigError("n must be at least 10");
    }
    if (grid_size < 4) {
        throw ConfigError("grid size must be at least 4");
    }
}

double DesignShape::eigenvalue(std::size_t k) const
{
    const double kk = static_cast<double>(k);
    return design == 2 ? 1.0 / (kk * kk) : std::pow(kk, -1.5);
}

double DesignShape::eigenfunction(std::size_t k, double t) const
{
    const double kk = static_cast<double>(k);
    if (design == 2) {
        return std::cos(kk * std::numbers::pi * t / 5.0) / std::sqrt(5.0);
    }
    return std::numbers::sqrt2 * std::sin(kk * std::numbers::pi * t);
}

DesignShape design_shape(int design)
{
    if (design < 1 || design > 3) {
        throw ConfigError("design must be 1, 2 or 3 (got " + std::to_string(design) + ")");
    }
    DesignShape shape;
    shape.design = design;
    shape.scalar_count = 50;
    if (design == 2) {
        shape.components = 20;
        shape.t_max = 10.0;
        shape.noise_factor_mean = 1.0 / 3.0 + 0.01;
    } else {
        shape.components = 40;
        shape.noise_factor_mean = design == 3 ? 1.01 : 1.0;
    }
    return shape;
}

std::vector<double> design_grid(int design, std::size_t grid_size)
{
    const DesignShape shape = design_shape(design);
    std::vector<double> grid(grid_size);
    for (std::size_t j = 0; j < grid_size; ++j) {
        grid[j] = shape.t_min +
                  (shape.t_max - shape.t_min) * static_cast<double>(j) / static_cast<double>(grid_size - 1);
    }
    return grid;
}

double design_mean_variance(int design, std::uint64_t seed, std::size_t draws)
{
    const DesignShape shape = design_shape(design);
    RandomStream stream = RandomStream(seed).substream(kCalibrationStream);
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        const double mu = draw_subject(shape, stream).mu;
        const double delta = mu - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (mu - mean);
    }
    return m2 / static_cast<double>(draws - 1);
}

double calibrate_eta(const DesignConfig& config)
{
    config.validate();
    const DesignShape shape = design_shape(config.design);
    const double var_mu = design_mean_variance(config.design, config.seed);
    return std::sqrt(var_mu * (1.0 - config.r2) / (config.r2 * shape.noise_factor_mean));
}

SimulatedData gen_design(const DesignConfig& config, double eta, RandomStream& stream)
{
    config.validate();
    const DesignShape shape = design_shape(config.design);
    const auto n = static_cast<Eigen::Index>(config.n);
    const auto k = static_cast<Eigen::Index>(shape.components);
    const auto points = static_cast<Eigen::Index>(config.grid_size);

    SimulatedData out;
    out.curves.grid = design_grid(config.design, config.grid_size);
    Matrix psi(k, points);
    for (Eigen::Index c = 0; c < k; ++c) {
        for (Eigen::Index j = 0; j < points; ++j) {
            psi(c, j) = shape.eigenfunction(static_cast<std::size_t>(c + 1), out.curves.grid[static_cast<std::size_t>(j)]);
        }
    }

    out.y.resize(n);
    out.mu.resize(n);
    out.z.resize(n, static_cast<Eigen::Index>(shape.scalar_count));
    out.zeta.resize(n, k);
    out.xi.resize(n, k);
    out.curves.obs.resize(n, points);
    const double measurement_sd = std::sqrt(kMeasurementVariance);

    for (Eigen::Index i = 0; i < n; ++i) {
        const Subject s = draw_subject(shape, stream);
        out.z.row(i) = s.z.transpose();
        out.zeta.row(i) = s.zeta.transpose();
        out.xi.row(i) = s.xi.transpose();
        out.mu[i] = s.mu;
        out.y[i] = s.mu + eta * std::sqrt(s.noise_factor) * stream.normal();
        out.curves.obs.row(i) = s.zeta.transpose() * psi;
        for (Eigen::Index j = 0; j < points; ++j) {
            out.curves.obs(i, j) += measurement_sd * stream.normal();
        }
    }
    return out;
}

SimulatedData gen_design(const DesignConfig& config, RandomStream& stream)
{
    return gen_design(config, calibrate_eta(config), stream);
}

std::vector<CandidateSpec> enumerate_candidates(CandidateSet set)
{
    std::vector<CandidateSpec> out;
    switch (set) {
    case CandidateSet::M15A:
        for (std::size_t sz = 1; sz <= 5; ++sz) {
            for (std::size_t sx = 1; sx <= 3; ++sx) {
                out.push_back({prefix(sz), prefix(sx), std::nullopt});
            }
        }
        break;
    case CandidateSet::M15B:
        for (unsigned mask = 1; mask < (1u << 2); ++mask) {
            for (std::size_t sx = 1; sx <= 5; ++sx) {
                out.push_back({from_mask(mask), prefix(sx), std::nullopt});
            }
        }
        break;
    case CandidateSet::M21:
        for (unsigned zmask = 1; zmask < (1u << 3); ++zmask) {
            for (unsigned xmask = 1; xmask < (1u << 2); ++xmask) {
                out.push_back({from_mask(zmask), from_mask(xmask), std::nullopt});
            }
        }
        break;
    }
    return out;
}

ReplicationRecord run_replication(const DesignConfig& config, double eta, const std::vector<CandidateSpec>& specs,
                                  std::size_t rep_index)
{
    ReplicationRecord record;
    record.rep_index = rep_index;
    try {
        RandomStream stream = RandomStream(config.seed).substream(rep_index);
        const FittedSample sample = fit_sample(config, eta, specs, stream);
        const auto results = run_all_methods(sample.fits, sample.data.y);
        const double n = static_cast<double>(config.n);
        for (std::size_t m = 0; m < results.size(); ++m) {
            record.loss[m] = loss(results[m].fitted, sample.data.mu) / n;
            record.weights[m] = results[m].weights.weights;
        }
        const WeightVector oracle = oracle_weights(sample.fits, sample.data.mu);
        record.oracle_loss = oracle.objective / n;
    } catch (const std::exception& e) {
        record.failed = true;
        record.error = e.what();
    }
    return record;
}

StudyTable run_study(const DesignConfig& config)
{
    config.validate();
    const double eta = calibrate_eta(config);
    const auto specs = enumerate_candidates(config.candidate_set);

    StudyTable table;
    table.config = config;
    table.replications.resize(config.reps);
    parallel_for(config.reps, resolve_threads(config.threads),
                 [&](std::size_t r) { table.replications[r] = run_replication(config, eta, specs, r); });

    std::array<double, 6> total{};
    std::size_t used = 0;
    for (const auto& rec : table.replications) {
        if (rec.failed) {
            ++table.failed;
            continue;
        }
        ++used;
        for (std::size_t m = 0; m < total.size(); ++m) {
            total[m] += rec.loss[m];
        }
    }
    if (static_cast<double>(table.failed) > 0.05 * static_cast<double>(config.reps)) {
        std::string first_error;
        for (const auto& rec : table.replications) {
            if (rec.failed) {
                first_error = rec.error;
                break;
            }
        }
        throw NumericalError(std::to_string(table.failed) + " of " + std::to_string(config.reps) +
                             " replications failed; first error: " + first_error);
    }

    const double aic_mse = total[1] / static_cast<double>(used);
    for (std::size_t m = 0; m < kAllMethods.size(); ++m) {
        MethodSummary row;
        row.method = kAllMethods[m];
        row.mse = total[m] / static_cast<double>(used);
        row.nmse = row.mse / aic_mse;
        row.reps_used = used;
        table.rows.push_back(row);
    }
    return table;
}

void write_study_csv(const StudyTable& table, std::ostream& out)
{
    const auto old_precision = out.precision(17);
    out << "design,n,r2,method,mse,nmse,reps_used\n";
    for (const auto& row : table.rows) {
        out << table.config.design << ',' << table.config.n << ',' << table.config.r2 << ',' << method_name(row.method)
            << ',' << row.mse << ',' << row.nmse << ',' << row.reps_used << '\n';
    }
    out.precision(old_precision);
}

void write_replications_csv(const StudyTable& table, std::ostream& out)
{
    const auto old_precision = out.precision(17);
    out << "rep,method,loss,oracle_loss,weights\n";
    for (const auto& rec : table.replications) {
        if (rec.failed) {
            continue;
        }
        for (std::size_t m = 0; m < kAllMethods.size(); ++m) {
            out << rec.rep_index << ',' << method_name(kAllMethods[m]) << ',' << rec.loss[m] << ',';
            if (rec.oracle_loss) {
                out << *rec.oracle_loss;
            }
            out << ',';
            const Vector& w = rec.weights[m];
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                out << (i ? ";" : "") << w[i];
            }
            out << '\n';
        }
    }
    out.precision(old_precision);
}

std::vector<Vector> simplex_grid(std::size_t m, double step)
{
    require(m >= 1, "simplex_grid: need at least one coordinate");
    const double units_real = 1.0 / step;
    const auto units = static_cast<long>(std::llround(units_real));
    if (!(step > 0.0) || units < 1 || std::abs(units_real - static_cast<double>(units)) > 1e-9 * units_real) {
        throw ConfigError("grid step must divide 1 evenly");
    }
    // C(units + m - 1, m - 1) points.
    double count = 1.0;
    for (std::size_t i = 1; i < m; ++i) {
        count *= static_cast<double>(units + static_cast<long>(i)) / static_cast<double>(i);
    }
    if (count > 2e6) {
        throw ConfigError("simplex grid would have " + std::to_string(static_cast<long long>(count)) +
                          " points; use a larger step or fewer candidates");
    }

    std::vector<Vector> out;
    std::vector<long> parts(m, 0);
    auto recurse = [&](auto&& self, std::size_t pos, long remaining) -> void {
        if (pos + 1 == m) {
            parts[pos] = remaining;
            Vector w(static_cast<Eigen::Index>(m));
            for (std::size_t i = 0; i < m; ++i) {
                w[static_cast<Eigen::Index>(i)] = static_cast<double>(parts[i]) / static_cast<double>(units);
            }
            out.push_back(std::move(w));
            return;
        }
        for (long v = 0; v <= remaining; ++v) {
            parts[pos] = v;
            self(self, pos + 1, remaining - v);
        }
    };
    recurse(recurse, 0, units);
    return out;
}

std::vector<RatioRow> optimality_ratio(const DesignConfig& config, const std::vector<std::size_t>& sample_sizes,
                                       const std::vector<CandidateSpec>& candidates, double grid_step)
{
    config.validate();
    require(!candidates.empty(), "optimality_ratio: no candidates");
    const std::vector<Vector> grid = simplex_grid(candidates.size(), grid_step);
    const double eta = calibrate_eta(config);

    std::vector<RatioRow> rows;
    for (std::size_t n : sample_sizes) {
        DesignConfig local = config;
        local.n = n;
        local.validate();
        RatioRow row;
        row.n = n;
        row.ratios.assign(config.reps, 0.0);
        parallel_for(config.reps, resolve_threads(config.threads), [&](std::size_t r) {
            RandomStream stream = RandomStream(config.seed).substream(r);
            const FittedSample sample = fit_sample(local, eta, candidates, stream);
            const EnsembleResult mma = mallows_weights(sample.fits, sample.data.y, estimate_omega(sample.fits));
            const double achieved = loss(mma.fitted, sample.data.mu);

            double best = std::numeric_limits<double>::infinity();
            for (const Vector& w : grid) {
                Vector mu_hat = Vector::Zero(sample.data.mu.size());
                for (std::size_t m = 0; m < sample.fits.size(); ++m) {
                    mu_hat += w[static_cast<Eigen::Index>(m)] * sample.fits[m].fitted;
                }
                best = std::min(best, loss(mu_hat, sample.data.mu));
            }
            const WeightVector exact = oracle_weights(sample.fits, sample.data.mu);
            Vector mu_exact = Vector::Zero(sample.data.mu.size());
            for (std::size_t m = 0; m < sample.fits.size(); ++m) {
                mu_exact += exact.weights[static_cast<Eigen::Index>(m)] * sample.fits[m].fitted;
            }
            best = std::min(best, loss(mu_exact, sample.data.mu));
            row.ratios[r] = achieved / best;
        });
        std::vector<double> sorted = row.ratios;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t mid = sorted.size() / 2;
        row.median_ratio = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace plfsma
