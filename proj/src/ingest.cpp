#include "plfsma/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace plfsma {

namespace {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string> split_line(std::string_view line)
{
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            fields.emplace_back(trim(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.emplace_back(trim(current));
    return fields;
}

CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split_line(line);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw DataError(path.string() + " line " + std::to_string(line_no) + ": expected " +
                            std::to_string(table.header.size()) + " fields, found " + std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
        table.line_numbers.push_back(line_no);
    }
    if (!have_header) {
        throw DataError(path.string() + ": empty file");
    }
    return table;
}

bool is_missing(std::string_view field)
{
    return field.empty() || field == "NA" || field == "na" || field == "N/A";
}

// Parses a table body; missing cells become NaN and mark the row.
Matrix parse_body(const CsvTable& table, const std::filesystem::path& path, std::vector<bool>& missing)
{
    Matrix out(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(table.header.size()));
    missing.assign(table.rows.size(), false);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (std::size_t c = 0; c < table.header.size(); ++c) {
            const std::string& field = table.rows[r][c];
            if (is_missing(field)) {
                missing[r] = true;
                out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std::nan("");
                continue;
            }
            const auto value = parse_real(field);
            if (!value || !std::isfinite(*value)) {
                throw DataError(path.string() + " line " + std::to_string(table.line_numbers[r]) + ", column " +
                                std::to_string(c + 1) + " ('" + table.header[c] + "'): non-numeric value '" + field +
                                "'");
            }
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *value;
        }
    }
    return out;
}

std::vector<double> parse_grid_header(const CsvTable& table, const std::filesystem::path& path)
{
    std::vector<double> grid;
    for (const auto& name : table.header) {
        std::optional<double> value;
        if (name.size() > 2 && name.compare(0, 2, "t:") == 0) {
            value = parse_real(std::string_view(name).substr(2));
        }
        if (!value) {
            throw DataError(path.string() + ": curve header field '" + name + "' is not of the form t:<value>");
        }
        grid.push_back(*value);
    }
    for (std::size_t j = 1; j < grid.size(); ++j) {
        if (!(grid[j] > grid[j - 1])) {
            throw DataError(path.string() + ": curve grid is not strictly increasing at column " +
                            std::to_string(j + 1));
        }
    }
    return grid;
}

void check_rows(std::size_t a, std::size_t b, const std::filesystem::path& pa, const std::filesystem::path& pb)
{
    if (a != b) {
        throw DataError("row-count mismatch: " + pa.string() + " has " + std::to_string(a) + " rows, " +
                        pb.string() + " has " + std::to_string(b));
    }
}

std::vector<Eigen::Index> complete_rows(const std::vector<bool>& a, const std::vector<bool>& b,
                                        const std::vector<bool>& c)
{
    std::vector<Eigen::Index> keep;
    for (std::size_t r = 0; r < a.size(); ++r) {
        if (!a[r] && !b[r] && !c[r]) {
            keep.push_back(static_cast<Eigen::Index>(r));
        }
    }
    return keep;
}

Matrix take_rows(const Matrix& m, const std::vector<Eigen::Index>& rows)
{
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
    }
    return out;
}

void write_row(std::ostream& out, const Eigen::Ref<const Eigen::RowVectorXd>& row)
{
    for (Eigen::Index c = 0; c < row.size(); ++c) {
        out << (c ? "," : "") << format_real(row[c]);
    }
    out << '\n';
}

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    return out;
}

}  // namespace

std::string format_real(double value)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

std::optional<double> parse_real(std::string_view field)
{
    field = trim(field);
    if (!field.empty() && field.front() == '+') {
        field.remove_prefix(1);
    }
    double value = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        return std::nullopt;
    }
    return value;
}

double ColumnTransform::apply(double value) const
{
    const double g = log ? std::log(value) : value;
    return (g - center) / scale;
}

double ColumnTransform::invert(double value) const
{
    const double g = value * scale + center;
    return log ? std::exp(g) : g;
}

ColumnTransform compose(const ColumnTransform& first, const ColumnTransform& then)
{
    require(!then.log, "compose: a log transform can only be applied to untransformed data");
    return ColumnTransform{first.log, first.center + first.scale * then.center, first.scale * then.scale};
}

void Dataset::validate() const
{
    require(z.rows() == y.size() || y.size() == 0, "Dataset: response and scalar row counts differ");
    require(curves.obs.rows() == z.rows(), "Dataset: curve and scalar row counts differ");
    require(z_names.size() == static_cast<std::size_t>(z.cols()), "Dataset: column names do not match scalars");
    require(z_transforms.size() == z_names.size(), "Dataset: transform records do not match scalars");
    curves.validate();
}

Dataset read_predictors(const std::filesystem::path& scalars, const std::filesystem::path& curves)
{
    const CsvTable zt = read_csv(scalars);
    const CsvTable xt = read_csv(curves);
    check_rows(zt.rows.size(), xt.rows.size(), scalars, curves);
    std::vector<bool> zm, xm, none(zt.rows.size(), false);
    const Matrix z = parse_body(zt, scalars, zm);
    const Matrix x = parse_body(xt, curves, xm);
    const auto keep = complete_rows(zm, xm, none);

    Dataset ds;
    ds.z_names = zt.header;
    ds.z = take_rows(z, keep);
    ds.curves.grid = parse_grid_header(xt, curves);
    ds.curves.obs = take_rows(x, keep);
    ds.z_transforms.assign(ds.z_names.size(), ColumnTransform{});
    ds.dropped_rows = zt.rows.size() - keep.size();
    ds.validate();
    return ds;
}

Dataset read_dataset(const DatasetPaths& paths)
{
    const CsvTable zt = read_csv(paths.scalars);
    const CsvTable yt = read_csv(paths.response);
    const CsvTable xt = read_csv(paths.curves);
    if (yt.header.size() != 1 || yt.header[0] != "y") {
        throw DataError(paths.response.string() + ": response file must have a single column headed 'y'");
    }
    const std::vector<double> grid = parse_grid_header(xt, paths.curves);
    check_rows(yt.rows.size(), zt.rows.size(), paths.response, paths.scalars);
    check_rows(yt.rows.size(), xt.rows.size(), paths.response, paths.curves);

    std::vector<bool> ym, zm, xm;
    const Matrix y = parse_body(yt, paths.response, ym);
    const Matrix z = parse_body(zt, paths.scalars, zm);
    const Matrix x = parse_body(xt, paths.curves, xm);
    const auto keep = complete_rows(ym, zm, xm);

    Dataset ds;
    ds.y = take_rows(y, keep).col(0);
    ds.z = take_rows(z, keep);
    ds.z_names = zt.header;
    ds.curves.grid = grid;
    ds.curves.obs = take_rows(x, keep);
    ds.z_transforms.assign(ds.z_names.size(), ColumnTransform{});
    ds.dropped_rows = yt.rows.size() - keep.size();
    ds.validate();
    return ds;
}

CurveSet read_curves(const std::filesystem::path& curves)
{
    const CsvTable xt = read_csv(curves);
    std::vector<bool> missing;
    CurveSet out;
    out.grid = parse_grid_header(xt, curves);
    out.obs = parse_body(xt, curves, missing);
    const auto bad = std::find(missing.begin(), missing.end(), true);
    if (bad != missing.end()) {
        throw DataError(curves.string() + " line " + std::to_string(xt.line_numbers[bad - missing.begin()]) +
                        ": missing value");
    }
    out.validate();
    return out;
}

void write_dataset(const Dataset& ds, const DatasetPaths& paths)
{
    {
        auto out = open_out(paths.scalars);
        for (std::size_t c = 0; c < ds.z_names.size(); ++c) {
            out << (c ? "," : "") << ds.z_names[c];
        }
        out << '\n';
        for (Eigen::Index r = 0; r < ds.z.rows(); ++r) {
            write_row(out, ds.z.row(r));
        }
    }
    {
        auto out = open_out(paths.response);
        out << "y\n";
        for (Eigen::Index r = 0; r < ds.y.size(); ++r) {
            out << format_real(ds.y[r]) << '\n';
        }
    }
    {
        auto out = open_out(paths.curves);
        for (std::size_t j = 0; j < ds.curves.grid.size(); ++j) {
            out << (j ? "," : "") << "t:" << format_real(ds.curves.grid[j]);
        }
        out << '\n';
        for (Eigen::Index r = 0; r < ds.curves.obs.rows(); ++r) {
            write_row(out, ds.curves.obs.row(r));
        }
    }
}

Standardization fit_standardization(const Dataset& ds, const StandardizeOptions& options)
{
    Standardization st;
    auto moments = [](const Vector& v) {
        const double mean = v.mean();
        const double var = v.size() > 1 ? (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1) : 0.0;
        return std::pair{mean, std::sqrt(var)};
    };

    std::set<std::string> seen;
    for (const auto& name : options.z_columns) {
        const auto it = std::find(ds.z_names.begin(), ds.z_names.end(), name);
        if (it == ds.z_names.end()) {
            throw ConfigError("unknown scalar column '" + name + "'");
        }
        if (!seen.insert(name).second) {
            continue;
        }
        const auto [mean, sd] = moments(ds.z.col(it - ds.z_names.begin()));
        if (!(sd > 0.0)) {
            throw DataError("column '" + name + "' has zero variance and cannot be standardized");
        }
        st.z.emplace_back(name, ColumnTransform{false, mean, sd});
    }

    switch (options.response) {
    case ResponseTransform::None:
        break;
    case ResponseTransform::Standardize: {
        const auto [mean, sd] = moments(ds.y);
        if (!(sd > 0.0)) {
            throw DataError("response has zero variance and cannot be standardized");
        }
        st.y = ColumnTransform{false, mean, sd};
        break;
    }
    case ResponseTransform::LogCenter: {
        for (Eigen::Index i = 0; i < ds.y.size(); ++i) {
            if (!(ds.y[i] > 0.0)) {
                throw DataError("log transform needs positive responses; row " + std::to_string(i + 1) + " has " +
                                format_real(ds.y[i]));
            }
        }
        st.y = ColumnTransform{true, ds.y.array().log().mean(), 1.0};
        break;
    }
    }
    return st;
}

Dataset apply_standardization(const Dataset& ds, const Standardization& st)
{
    Dataset out = ds;
    for (const auto& [name, transform] : st.z) {
        const auto it = std::find(out.z_names.begin(), out.z_names.end(), name);
        if (it == out.z_names.end()) {
            throw ConfigError("unknown scalar column '" + name + "'");
        }
        const auto c = static_cast<Eigen::Index>(it - out.z_names.begin());
        for (Eigen::Index i = 0; i < out.z.rows(); ++i) {
            out.z(i, c) = transform.apply(out.z(i, c));
        }
        auto& record = out.z_transforms[static_cast<std::size_t>(c)];
        record = record.identity() ? transform : compose(record, transform);
    }
    if (st.y && out.y.size() > 0) {
        for (Eigen::Index i = 0; i < out.y.size(); ++i) {
            if (st.y->log && !(out.y[i] > 0.0)) {
                throw DataError("log transform needs positive responses; row " + std::to_string(i + 1) + " has " +
                                format_real(out.y[i]));
            }
            out.y[i] = st.y->apply(out.y[i]);
        }
        out.y_transform = out.y_transform.identity() ? *st.y : compose(out.y_transform, *st.y);
    }
    return out;
}

Dataset subset(const Dataset& ds, const std::vector<Eigen::Index>& rows)
{
    Dataset out;
    out.z_names = ds.z_names;
    out.z_transforms = ds.z_transforms;
    out.y_transform = ds.y_transform;
    out.curves.grid = ds.curves.grid;
    out.z = take_rows(ds.z, rows);
    out.curves.obs = take_rows(ds.curves.obs, rows);
    if (ds.y.size() > 0) {
        out.y.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out.y[static_cast<Eigen::Index>(r)] = ds.y[rows[r]];
        }
    }
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, RandomStream& stream)
{
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("split fraction must lie strictly inside (0, 1)");
    }
    const auto n = static_cast<std::size_t>(ds.rows());
    const auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    const std::size_t min_train = static_cast<std::size_t>(ds.z.cols()) + 2;
    if (n_train < min_train) {
        throw ConfigError("split leaves " + std::to_string(n_train) + " training rows; at least " +
                          std::to_string(min_train) + " are required");
    }
    if (n_train >= n) {
        throw ConfigError("split leaves no test rows");
    }

    std::vector<Eigen::Index> perm(n);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    for (std::size_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(stream.uniform_index(i + 1));
        std::swap(perm[i], perm[j]);
    }
    std::vector<Eigen::Index> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<Eigen::Index> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {subset(ds, train), subset(ds, test)};
}

double mspe(const Vector& y_test, const Vector& predictions)
{
    require(y_test.size() == predictions.size(), "mspe: length mismatch");
    require(y_test.size() >= 1, "mspe: empty test set");
    return (y_test - predictions).squaredNorm() / static_cast<double>(y_test.size());
}

}  // namespace plfsma
