#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "plfsma/averaging.hpp"
#include "plfsma/candidate.hpp"
#include "plfsma/fpca.hpp"

namespace plfsma {

enum class CandidateSet { M15A, M15B, M21 };

std::string_view candidate_set_name(CandidateSet set);
std::optional<CandidateSet> parse_candidate_set(std::string_view name);  // case-insensitive

struct DesignConfig {
    int design = 1;  // 1, 2 or 3
    std::size_t n = 100;
    double r2 = 0.5;
    std::size_t grid_size = 100;
    std::size_t reps = 200;
    std::uint64_t seed = 0;
    CandidateSet candidate_set = CandidateSet::M15A;
    std::size_t threads = 0;  // 0: PLFSMA_THREADS or hardware concurrency

    void validate() const;
};

/// One simulated sample. `xi` and `zeta` are the true (transformed) scores
/// for every component of the generating process.
struct SimulatedData {
    Vector y;
    Matrix z;  // n x 50
    CurveSet curves;
    Vector mu;
    Matrix xi;
    Matrix zeta;
};

/// Per-design constants of the generating process.
struct DesignShape {
    int design = 1;
    std::size_t scalar_count = 50;
    std::size_t components = 0;
    double t_min = 0.0;
    double t_max = 1.0;
    double noise_factor_mean = 1.0;  // E of the heteroscedastic variance multiplier

    double eigenvalue(std::size_t k) const;  // k is 1-based
    double eigenfunction(std::size_t k, double t) const;
};

DesignShape design_shape(int design);

/// Equally spaced grid on the design's time interval.
std::vector<double> design_grid(int design, std::size_t grid_size);

/// var(mu) from a 1e5-subject draw on a stream derived only from (design, seed).
double design_mean_variance(int design, std::uint64_t seed, std::size_t draws = 100000);

/// Noise scale eta with var(mu) / (var(mu) + eta^2 s) = r2.
double calibrate_eta(const DesignConfig& config);

// Per subject the draw order is: Z block (for designs 2 and 3 the joint
// vector (zeta_1, Z_1..Z_50) with AR(1) correlation 0.5), remaining scores
// zeta_k, design-2 u_i, epsilon, then the N measurement errors with
// variance 0.2.
SimulatedData gen_design(const DesignConfig& config, double eta, RandomStream& stream);
SimulatedData gen_design(const DesignConfig& config, RandomStream& stream);

/// Candidate lists, ordered by scalar subset mask (or prefix length for
/// M15A) and then by score prefix length or mask.
std::vector<CandidateSpec> enumerate_candidates(CandidateSet set);

struct ReplicationRecord {
    std::size_t rep_index = 0;
    bool failed = false;
    std::string error;
    std::array<double, 6> loss{};  // ||mu_hat - mu||^2 / n, indexed like kAllMethods
    std::array<Vector, 6> weights;
    std::optional<double> oracle_loss;  // min over the simplex of the same loss
};

struct MethodSummary {
    Method method = Method::MMA;
    double mse = 0.0;
    double nmse = 0.0;
    std::size_t reps_used = 0;
};

struct StudyTable {
    DesignConfig config;
    std::vector<MethodSummary> rows;
    std::vector<ReplicationRecord> replications;
    std::size_t failed = 0;
};

/// Full pipeline for one replication: simulate, presmooth, FPCA, fit every
/// candidate on estimated scores, run all six methods.
ReplicationRecord run_replication(const DesignConfig& config, double eta, const std::vector<CandidateSpec>& specs,
                                  std::size_t rep_index);

/// Replications run in parallel; each owns substream(rep_index) of the master
/// seed and aggregation is ordered by index, so tables do not depend on the
/// thread count. Throws NumericalError if more than 5% of replications fail.
StudyTable run_study(const DesignConfig& config);

void write_study_csv(const StudyTable& table, std::ostream& out);
void write_replications_csv(const StudyTable& table, std::ostream& out);

/// Simplex grid points sum(w) = 1 with coordinates on multiples of step.
std::vector<Vector> simplex_grid(std::size_t m, double step);

struct RatioRow {
    std::size_t n = 0;
    double median_ratio = 0.0;
    std::vector<double> ratios;
};

/// L_n(w_hat) / inf_w L_n(w) for the listed candidates, per sample size.
/// The infimum is the smaller of the grid minimum and the exact simplex-QP
/// minimum, so ratios are never below one beyond solver tolerance.
std::vector<RatioRow> optimality_ratio(const DesignConfig& config, const std::vector<std::size_t>& sample_sizes,
                                       const std::vector<CandidateSpec>& candidates, double grid_step = 0.05);

}  // namespace plfsma
