#include "plfsma/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace plfsma {

namespace {

using nlohmann::json;

json vector_json(const Vector& v)
{
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(v[i]);
    }
    return out;
}

json matrix_json(const Matrix& m)
{
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        out.push_back(std::move(row));
    }
    return out;
}

Vector vector_from(const json& j)
{
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

Matrix matrix_from(const json& j, Eigen::Index cols_if_empty = 0)
{
    const auto rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : cols_if_empty;
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw DataError("model: ragged matrix row " + std::to_string(r));
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

json transform_json(const ColumnTransform& t)
{
    return json{{"log", t.log}, {"center", t.center}, {"scale", t.scale}};
}

ColumnTransform transform_from(const json& j)
{
    return ColumnTransform{j.at("log").get<bool>(), j.at("center").get<double>(), j.at("scale").get<double>()};
}

json spec_json(const CandidateSpec& spec)
{
    json out{{"z", spec.z_cols}, {"xi", spec.xi_cols}};
    if (spec.bandwidth) {
        out["h"] = *spec.bandwidth;
    } else {
        out["h"] = "auto";
    }
    return out;
}

CandidateSpec spec_from(const json& j, std::size_t index)
{
    const std::string where = "candidate " + std::to_string(index) + ": ";
    if (!j.is_object()) {
        throw ConfigError(where + "expected an object with keys z, xi, h");
    }
    for (const auto& [key, value] : j.items()) {
        if (key != "z" && key != "xi" && key != "h") {
            throw ConfigError(where + "unknown key '" + key + "'");
        }
    }
    auto indices = [&](const char* key) {
        std::vector<std::size_t> out;
        if (!j.contains(key)) {
            return out;
        }
        const json& arr = j.at(key);
        if (!arr.is_array()) {
            throw ConfigError(where + "'" + key + "' must be an array of column indices");
        }
        for (const json& v : arr) {
            if (!v.is_number_integer() || v.get<long long>() < 0) {
                throw ConfigError(where + "'" + key + "' entries must be non-negative integers");
            }
            out.push_back(v.get<std::size_t>());
        }
        return out;
    };
    CandidateSpec spec;
    spec.z_cols = indices("z");
    spec.xi_cols = indices("xi");
    if (j.contains("h")) {
        const json& h = j.at("h");
        if (h.is_number()) {
            spec.bandwidth = h.get<double>();
        } else if (!(h.is_string() && h.get<std::string>() == "auto")) {
            throw ConfigError(where + "'h' must be a number or \"auto\"");
        }
    }
    try {
        spec.validate(std::numeric_limits<std::size_t>::max(), std::numeric_limits<std::size_t>::max());
    } catch (const ContractViolation& e) {
        throw ConfigError(where + e.what());
    }
    return spec;
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool same_grid(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size()) {
        return false;
    }
    const double span = a.empty() ? 1.0 : std::max(1.0, std::abs(a.back() - a.front()));
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (std::abs(a[j] - b[j]) > 1e-9 * span) {
            return false;
        }
    }
    return true;
}

std::string describe_grid(const std::vector<double>& g)
{
    std::string out = std::to_string(g.size()) + " points";
    if (!g.empty()) {
        out += " on [" + format_real(g.front()) + ", " + format_real(g.back()) + "]";
    }
    return out;
}

}  // namespace

std::vector<CandidateSpec> parse_candidates(std::string_view json_text)
{
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("candidate list is not valid JSON: ") + e.what());
    }
    if (!j.is_array() || j.empty()) {
        throw ConfigError("candidate list must be a non-empty JSON array");
    }
    std::vector<CandidateSpec> specs;
    for (std::size_t i = 0; i < j.size(); ++i) {
        specs.push_back(spec_from(j[i], i));
    }
    return specs;
}

std::vector<CandidateSpec> read_candidates(const std::filesystem::path& path)
{
    return parse_candidates(read_text(path));
}

std::string candidates_to_json(const std::vector<CandidateSpec>& specs)
{
    json out = json::array();
    for (const auto& spec : specs) {
        out.push_back(spec_json(spec));
    }
    return out.dump(2) + "\n";
}

ModelArtifact train_model(const Dataset& train, const std::vector<CandidateSpec>& specs,
                          const std::vector<Method>& methods, std::size_t threads)
{
    if (specs.empty()) {
        throw ConfigError("no candidate models");
    }
    if (methods.empty()) {
        throw ConfigError("no averaging methods requested");
    }
    if (train.y.size() != train.rows()) {
        throw DataError("training data has no response");
    }

    ModelArtifact model;
    model.presmooth_bandwidth = auto_presmooth_bandwidth(train.curves.grid);
    const CurveSet smooth = recover_curves(train.curves, model.presmooth_bandwidth);
    model.basis = fit_fpca(smooth);

    std::size_t k_max = 0;
    for (const auto& spec : specs) {
        for (std::size_t k : spec.xi_cols) {
            k_max = std::max(k_max, k + 1);
        }
    }
    const auto z_cols = static_cast<std::size_t>(train.z.cols());
    for (std::size_t m = 0; m < specs.size(); ++m) {
        try {
            specs[m].validate(z_cols, std::max(k_max, std::size_t{1}));
        } catch (const ContractViolation& e) {
            throw ConfigError("candidate " + std::to_string(m) + ": " + e.what());
        }
        for (std::size_t c : specs[m].z_cols) {
            if (c >= z_cols) {
                throw ConfigError("candidate " + std::to_string(m) + ": scalar column " + std::to_string(c) +
                                  " out of range (" + std::to_string(z_cols) + " available)");
            }
        }
    }
    model.k_max = static_cast<Eigen::Index>(k_max);
    const ScoreMatrix scores = extract_scores(model.basis, smooth, model.k_max);
    const auto fits = fit_candidates(train.y, train.z, scores.transformed, specs, threads);
    const auto results = run_all_methods(fits, train.y);

    model.z_names = train.z_names;
    model.z_transforms = train.z_transforms;
    model.y_transform = train.y_transform;
    for (const auto& fit : fits) {
        model.candidates.push_back(fit.predictor());
    }
    model.scores_table = results.front().scores_table;
    for (Method method : methods) {
        const auto it = std::find_if(results.begin(), results.end(),
                                     [&](const EnsembleResult& r) { return r.method == method; });
        if (std::none_of(model.methods.begin(), model.methods.end(),
                         [&](const MethodWeights& w) { return w.method == method; })) {
            model.methods.push_back(MethodWeights{method, it->weights.weights, it->fitted, it->criterion_value});
        }
    }
    return model;
}

ModelPrediction apply_model(const ModelArtifact& model, const Dataset& data)
{
    if (!same_grid(model.basis.grid, data.curves.grid)) {
        throw DataError("curve grid mismatch: model has " + describe_grid(model.basis.grid) + ", input has " +
                        describe_grid(data.curves.grid));
    }
    if (data.z_names != model.z_names) {
        std::string expected;
        for (const auto& name : model.z_names) {
            expected += (expected.empty() ? "" : ",") + name;
        }
        throw DataError("scalar columns do not match the model; expected " + expected);
    }

    Matrix z = data.z;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const auto& t = model.z_transforms[static_cast<std::size_t>(c)];
        if (t.identity()) {
            continue;
        }
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            z(i, c) = t.apply(z(i, c));
        }
    }
    CurveSet raw{model.basis.grid, data.curves.obs};
    const CurveSet smooth = recover_curves(raw, model.presmooth_bandwidth);
    const ScoreMatrix scores = extract_scores(model.basis, smooth, model.k_max);

    ModelPrediction out;
    const Eigen::Index rows = z.rows();
    const auto m_count = static_cast<Eigen::Index>(model.methods.size());
    out.values.resize(rows, m_count);
    out.transformed_values.resize(rows, m_count);
    out.fallback.assign(static_cast<std::size_t>(rows), false);
    for (Eigen::Index j = 0; j < m_count; ++j) {
        const auto& mw = model.methods[static_cast<std::size_t>(j)];
        out.methods.push_back(mw.method);
        const Prediction p = predict(mw.weights, model.candidates, z, scores.transformed);
        out.transformed_values.col(j) = p.values;
        for (Eigen::Index i = 0; i < rows; ++i) {
            out.values(i, j) = model.y_transform.invert(p.values[i]);
            if (p.fallback[static_cast<std::size_t>(i)]) {
                out.fallback[static_cast<std::size_t>(i)] = true;
            }
        }
    }
    return out;
}

std::string serialize_model(const ModelArtifact& model)
{
    json basis{{"grid", model.basis.grid},
               {"mean", vector_json(model.basis.mean)},
               {"eigenvalues", vector_json(model.basis.eigenvalues)},
               {"eigenfunctions", matrix_json(model.basis.eigenfunctions)},
               {"retained", model.basis.retained}};

    json scalars = json::array();
    for (std::size_t c = 0; c < model.z_names.size(); ++c) {
        scalars.push_back(json{{"name", model.z_names[c]}, {"transform", transform_json(model.z_transforms[c])}});
    }

    json candidates = json::array();
    for (const auto& cand : model.candidates) {
        candidates.push_back(json{{"spec", spec_json(cand.spec)},
                                  {"bandwidth", cand.bandwidth},
                                  {"theta", vector_json(cand.theta)},
                                  {"kernel_points", matrix_json(cand.kernel_points)},
                                  {"partial_residual", vector_json(cand.partial_residual)}});
    }

    json methods = json::array();
    for (const auto& mw : model.methods) {
        json entry{{"method", std::string(method_name(mw.method))},
                   {"weights", vector_json(mw.weights)},
                   {"fitted", vector_json(mw.fitted)}};
        entry["criterion_value"] = mw.criterion_value ? json(*mw.criterion_value) : json(nullptr);
        methods.push_back(std::move(entry));
    }

    json scores = json::array();
    for (const auto& s : model.scores_table) {
        auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
        scores.push_back(json{{"aic", num(s.aic)}, {"bic", num(s.bic)}, {"saturated", s.saturated}});
    }

    json out{{"format", "plfsma-model"},
             {"version", model.version},
             {"presmooth_bandwidth", model.presmooth_bandwidth},
             {"k_max", model.k_max},
             {"basis", std::move(basis)},
             {"scalars", std::move(scalars)},
             {"response_transform", transform_json(model.y_transform)},
             {"candidates", std::move(candidates)},
             {"methods", std::move(methods)},
             {"information_criteria", std::move(scores)}};
    return out.dump(1) + "\n";
}

ModelArtifact parse_model(std::string_view json_text)
{
    ModelArtifact model;
    try {
        const json j = json::parse(json_text);
        if (j.value("format", "") != "plfsma-model") {
            throw DataError("model: not a plfsma model file");
        }
        model.version = j.at("version").get<int>();
        if (model.version != kModelVersion) {
            throw DataError("model: unsupported version " + std::to_string(model.version));
        }
        model.presmooth_bandwidth = j.at("presmooth_bandwidth").get<double>();
        model.k_max = j.at("k_max").get<Eigen::Index>();

        const json& basis = j.at("basis");
        model.basis.grid = basis.at("grid").get<std::vector<double>>();
        model.basis.mean = vector_from(basis.at("mean"));
        model.basis.eigenvalues = vector_from(basis.at("eigenvalues"));
        model.basis.eigenfunctions =
            matrix_from(basis.at("eigenfunctions"), static_cast<Eigen::Index>(model.basis.grid.size()));
        model.basis.retained = basis.at("retained").get<Eigen::Index>();

        for (const json& s : j.at("scalars")) {
            model.z_names.push_back(s.at("name").get<std::string>());
            model.z_transforms.push_back(transform_from(s.at("transform")));
        }
        model.y_transform = transform_from(j.at("response_transform"));

        std::size_t index = 0;
        for (const json& c : j.at("candidates")) {
            CandidatePredictor p;
            p.spec = spec_from(c.at("spec"), index++);
            p.bandwidth = c.at("bandwidth").get<double>();
            p.theta = vector_from(c.at("theta"));
            p.kernel_points = matrix_from(c.at("kernel_points"), static_cast<Eigen::Index>(p.spec.xi_cols.size()));
            p.partial_residual = vector_from(c.at("partial_residual"));
            model.candidates.push_back(std::move(p));
        }

        for (const json& m : j.at("methods")) {
            MethodWeights mw;
            const auto method = parse_method(m.at("method").get<std::string>());
            if (!method) {
                throw DataError("model: unknown method " + m.at("method").dump());
            }
            mw.method = *method;
            mw.weights = vector_from(m.at("weights"));
            mw.fitted = vector_from(m.at("fitted"));
            if (!m.at("criterion_value").is_null()) {
                mw.criterion_value = m.at("criterion_value").get<double>();
            }
            if (static_cast<std::size_t>(mw.weights.size()) != model.candidates.size()) {
                throw DataError("model: weight vector length does not match the candidate count");
            }
            model.methods.push_back(std::move(mw));
        }

        for (const json& s : j.value("information_criteria", json::array())) {
            InfoScores scores;
            scores.saturated = s.at("saturated").get<bool>();
            const double neg_inf = -std::numeric_limits<double>::infinity();
            scores.aic = s.at("aic").is_null() ? neg_inf : s.at("aic").get<double>();
            scores.bic = s.at("bic").is_null() ? neg_inf : s.at("bic").get<double>();
            model.scores_table.push_back(scores);
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("model: malformed JSON: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("model: ") + e.what());
    }

    if (model.z_names.size() != model.z_transforms.size() || model.basis.mean.size() !=
        static_cast<Eigen::Index>(model.basis.grid.size()) || model.k_max > model.basis.eigenfunctions.rows()) {
        throw DataError("model: inconsistent dimensions");
    }
    return model;
}

void save_model(const ModelArtifact& model, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto path = dir / "model.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << serialize_model(model);
}

ModelArtifact load_model(const std::filesystem::path& dir)
{
    const auto path = std::filesystem::is_directory(dir) ? dir / "model.json" : dir;
    return parse_model(read_text(path));
}

}  // namespace plfsma
