#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "plfsma/ingest.hpp"
#include "plfsma/model_io.hpp"

namespace plfsma {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumerical = 4 };

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct CompareRow {
    Method method = Method::MMA;
    double mean_mspe = 0.0;
    std::optional<double> standard_error;  // absent for a single repetition
    std::vector<double> mspe;
};

struct CompareOptions {
    double fraction = 0.8;
    std::size_t reps = 50;
    std::uint64_t seed = 0;
    std::vector<std::string> standardize;  // scalar column names
    bool log_y = false;
    std::size_t threads = 0;
};

/// Repeated split, fit on train (standardization estimated there), predict on
/// test. MSPE is measured on the transformed response scale. Rows follow
/// kAllMethods.
std::vector<CompareRow> compare_methods(const Dataset& data, const std::vector<CandidateSpec>& specs,
                                        const CompareOptions& options);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace plfsma
