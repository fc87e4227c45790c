#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "plfsma/fpca.hpp"
#include "plfsma/numerics.hpp"

namespace plfsma {

/// value -> (g(value) - center) / scale, with g = log when `log` is set.
struct ColumnTransform {
    bool log = false;
    double center = 0.0;
    double scale = 1.0;

    double apply(double value) const;
    double invert(double value) const;
    bool identity() const { return !log && center == 0.0 && scale == 1.0; }
};

/// `first` followed by `then`. `then` must not take a log.
ColumnTransform compose(const ColumnTransform& first, const ColumnTransform& then);

struct Dataset {
    Vector y;
    Matrix z;
    std::vector<std::string> z_names;
    CurveSet curves;
    // Cumulative transforms from the values read off disk.
    std::vector<ColumnTransform> z_transforms;
    ColumnTransform y_transform;
    std::size_t dropped_rows = 0;

    Eigen::Index rows() const { return z.rows(); }
    void validate() const;
};

struct DatasetPaths {
    std::filesystem::path scalars;
    std::filesystem::path response;
    std::filesystem::path curves;
};

/// Scalars: header of column names. Response: one column headed `y`.
/// Curves: header `t:<value>` per column, strictly increasing. Comma
/// separated, `.` decimal. Rows with an empty or NA field in any file are
/// dropped from all three.
Dataset read_dataset(const DatasetPaths& paths);

/// Scalar and curve files only, for prediction inputs.
Dataset read_predictors(const std::filesystem::path& scalars, const std::filesystem::path& curves);

/// Curve file only. Rows with missing values are an error here.
CurveSet read_curves(const std::filesystem::path& curves);

/// Writes all three files with 17 significant digits.
void write_dataset(const Dataset& ds, const DatasetPaths& paths);

enum class ResponseTransform { None, Standardize, LogCenter };

struct StandardizeOptions {
    std::vector<std::string> z_columns;
    ResponseTransform response = ResponseTransform::None;
};

/// Transforms estimated from one dataset, to be applied to others.
struct Standardization {
    std::vector<std::pair<std::string, ColumnTransform>> z;
    std::optional<ColumnTransform> y;
};

/// Sample mean and (n - 1) standard deviation per selected column.
Standardization fit_standardization(const Dataset& ds, const StandardizeOptions& options);

/// Applies the transforms and composes them into the dataset's records.
/// The response transform is skipped when the dataset has no response.
Dataset apply_standardization(const Dataset& ds, const Standardization& st);

inline Dataset standardize(const Dataset& ds, const StandardizeOptions& options)
{
    return apply_standardization(ds, fit_standardization(ds, options));
}

Dataset subset(const Dataset& ds, const std::vector<Eigen::Index>& rows);

/// Uniform random split with floor(fraction * n) training rows, both parts in
/// original row order. Needs at least p + 2 training rows and one test row.
std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, RandomStream& stream);

double mspe(const Vector& y_test, const Vector& predictions);

/// 17 significant digits, locale independent.
std::string format_real(double value);

/// Locale-independent parse of a whole field; nullopt on any stray character.
std::optional<double> parse_real(std::string_view field);

}  // namespace plfsma
