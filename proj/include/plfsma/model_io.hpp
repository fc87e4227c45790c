#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "plfsma/averaging.hpp"
#include "plfsma/candidate.hpp"
#include "plfsma/fpca.hpp"
#include "plfsma/ingest.hpp"

namespace plfsma {

inline constexpr int kModelVersion = 1;

struct MethodWeights {
    Method method = Method::MMA;
    Vector weights;
    Vector fitted;  // training fitted values, transformed response scale
    std::optional<double> criterion_value;
};

/// Everything `predict` needs: presmoothing, basis, transforms, candidates and
/// the weights of every requested method.
struct ModelArtifact {
    int version = kModelVersion;
    double presmooth_bandwidth = 0.0;
    FpcaBasis basis;
    Eigen::Index k_max = 0;
    std::vector<std::string> z_names;
    std::vector<ColumnTransform> z_transforms;
    ColumnTransform y_transform;
    std::vector<CandidatePredictor> candidates;
    std::vector<MethodWeights> methods;
    std::vector<InfoScores> scores_table;
};

/// JSON candidate list: array of {"z": [int...], "xi": [int...], "h": number|"auto"}
/// with 0-based column indices. Each entry is validated for xi non-empty and
/// unique indices; range checks happen at fit time.
std::vector<CandidateSpec> parse_candidates(std::string_view json_text);
std::vector<CandidateSpec> read_candidates(const std::filesystem::path& path);
std::string candidates_to_json(const std::vector<CandidateSpec>& specs);

/// Presmooth, FPCA, fit every candidate and run `methods` on a training set.
ModelArtifact train_model(const Dataset& train, const std::vector<CandidateSpec>& specs,
                          const std::vector<Method>& methods, std::size_t threads = 1);

struct ModelPrediction {
    std::vector<Method> methods;
    Matrix values;  // rows x methods, original response scale
    Matrix transformed_values;
    std::vector<bool> fallback;
};

/// New curves go through the stored presmoother and basis; the dataset's
/// scalars must be raw (untransformed) with the training column names.
ModelPrediction apply_model(const ModelArtifact& model, const Dataset& data);

std::string serialize_model(const ModelArtifact& model);
ModelArtifact parse_model(std::string_view json_text);

/// Stored as `model.json` inside `dir`.
void save_model(const ModelArtifact& model, const std::filesystem::path& dir);
ModelArtifact load_model(const std::filesystem::path& dir);

}  // namespace plfsma
