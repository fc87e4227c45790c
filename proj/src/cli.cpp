#include "plfsma/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "plfsma/fpca.hpp"
#include "plfsma/simulate.hpp"

namespace plfsma {

namespace {

using nlohmann::json;

std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::ofstream open_output(const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    return out;
}

struct Manifest {
    std::string command;
    json config = json::object();
    std::uint64_t seed = 0;
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> outputs;

    void write(const std::filesystem::path& path) const
    {
        json digests = json::array();
        for (const auto& input : inputs) {
            digests.push_back(json{{"path", input.string()}, {"sha256", sha256_file(input)}});
        }
        json outs = json::array();
        for (const auto& output : outputs) {
            outs.push_back(output.string());
        }
        const json doc{{"command", command},   {"config", config},
                       {"seed", seed},         {"version", PLFSMA_VERSION},
                       {"timestamp", utc_timestamp()}, {"inputs", std::move(digests)},
                       {"outputs", std::move(outs)}};
        auto out = open_output(path);
        out << doc.dump(2) << '\n';
    }
};

std::filesystem::path sibling(const std::filesystem::path& path, const std::string& suffix)
{
    auto out = path;
    out += suffix;
    return out;
}

std::vector<std::string> split_names(const std::string& list)
{
    std::vector<std::string> names;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            names.push_back(item);
        }
    }
    return names;
}

std::vector<std::string> resolve_columns(const std::vector<std::string>& requested, const Dataset& ds)
{
    if (requested.size() == 1 && requested.front() == "all") {
        return ds.z_names;
    }
    return requested;
}

std::vector<Method> resolve_methods(const std::string& name)
{
    if (name == "all") {
        return {kAllMethods.begin(), kAllMethods.end()};
    }
    const auto method = parse_method(name);
    if (!method) {
        throw ConfigError("--method: unknown method '" + name + "'");
    }
    return {*method};
}

void write_curve_header(std::ostream& out, const std::string& first, const std::vector<double>& grid)
{
    out << first;
    for (double t : grid) {
        out << ",t:" << format_real(t);
    }
    out << '\n';
}

struct CommonFlags {
    std::string scalars;
    std::string response;
    std::string curves;
    std::string candidates;
    std::string standardize;
    bool log_y = false;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
};

Dataset load_training(const CommonFlags& flags, std::ostream& err)
{
    Dataset ds = read_dataset(DatasetPaths{flags.scalars, flags.response, flags.curves});
    if (ds.dropped_rows > 0) {
        err << "dropped " << ds.dropped_rows << " incomplete rows\n";
    }
    return ds;
}

StandardizeOptions standardize_options(const CommonFlags& flags, const Dataset& ds)
{
    StandardizeOptions options;
    options.z_columns = resolve_columns(split_names(flags.standardize), ds);
    options.response = flags.log_y ? ResponseTransform::LogCenter : ResponseTransform::None;
    return options;
}

json common_config(const CommonFlags& flags)
{
    return json{{"scalars", flags.scalars},       {"response", flags.response},
                {"curves", flags.curves},         {"candidates", flags.candidates},
                {"standardize", flags.standardize}, {"log_y", flags.log_y},
                {"threads", resolve_threads(flags.threads)}};
}

void cmd_simulate(const DesignConfig& config, const std::string& out_path, std::ostream& out)
{
    config.validate();
    const StudyTable table = run_study(config);
    const std::filesystem::path path(out_path);
    const auto reps_path = sibling(path, ".replications.csv");
    {
        auto f = open_output(path);
        write_study_csv(table, f);
    }
    {
        auto f = open_output(reps_path);
        write_replications_csv(table, f);
    }
    Manifest manifest;
    manifest.command = "simulate";
    manifest.seed = config.seed;
    manifest.config = json{{"design", config.design},
                           {"n", config.n},
                           {"r2", config.r2},
                           {"reps", config.reps},
                           {"grid", config.grid_size},
                           {"candidates", std::string(candidate_set_name(config.candidate_set))},
                           {"threads", resolve_threads(config.threads)},
                           {"eta", calibrate_eta(config)}};
    manifest.outputs = {path, reps_path};
    manifest.write(sibling(path, ".manifest.json"));
    out << "wrote " << path.string() << " (" << table.failed << " failed replications)\n";
}

void cmd_fpca(const std::string& curves_path, const std::string& bandwidth, std::size_t components,
              const std::string& out_dir, std::ostream& out)
{
    const CurveSet raw = read_curves(curves_path);
    std::optional<double> h;
    if (bandwidth != "auto") {
        const auto value = parse_real(bandwidth);
        if (!value || !(*value > 0.0)) {
            throw ConfigError("--bandwidth: expected a positive number or 'auto'");
        }
        h = *value;
    }
    const CurveSet smooth = recover_curves(raw, h);
    const FpcaBasis basis = fit_fpca(smooth);
    const Eigen::Index k = components == 0 ? std::min<Eigen::Index>(basis.retained, 10)
                                           : static_cast<Eigen::Index>(components);
    const ScoreMatrix scores = extract_scores(basis, smooth, k);

    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    {
        auto f = open_output(dir / "eigenvalues.csv");
        f << "component,eigenvalue\n";
        for (Eigen::Index j = 0; j < basis.eigenvalues.size(); ++j) {
            f << j + 1 << ',' << format_real(basis.eigenvalues[j]) << '\n';
        }
    }
    {
        auto f = open_output(dir / "eigenfunctions.csv");
        write_curve_header(f, "component", basis.grid);
        f << "mean";
        for (Eigen::Index c = 0; c < basis.mean.size(); ++c) {
            f << ',' << format_real(basis.mean[c]);
        }
        f << '\n';
        for (Eigen::Index j = 0; j < basis.eigenfunctions.rows(); ++j) {
            f << j + 1;
            for (Eigen::Index c = 0; c < basis.eigenfunctions.cols(); ++c) {
                f << ',' << format_real(basis.eigenfunctions(j, c));
            }
            f << '\n';
        }
    }
    {
        auto f = open_output(dir / "scores.csv");
        for (Eigen::Index j = 0; j < k; ++j) {
            f << (j ? "," : "") << "zeta" << j + 1;
        }
        for (Eigen::Index j = 0; j < k; ++j) {
            f << ",xi" << j + 1;
        }
        f << '\n';
        for (Eigen::Index i = 0; i < scores.raw.rows(); ++i) {
            for (Eigen::Index j = 0; j < k; ++j) {
                f << (j ? "," : "") << format_real(scores.raw(i, j));
            }
            for (Eigen::Index j = 0; j < k; ++j) {
                f << ',' << format_real(scores.transformed(i, j));
            }
            f << '\n';
        }
    }
    Manifest manifest;
    manifest.command = "fpca";
    manifest.config = json{{"curves", curves_path}, {"bandwidth", bandwidth}, {"components", k}};
    manifest.inputs = {curves_path};
    manifest.outputs = {dir / "eigenvalues.csv", dir / "eigenfunctions.csv", dir / "scores.csv"};
    manifest.write(dir / "manifest.json");
    out << "retained " << basis.retained << " components; wrote " << dir.string() << '\n';
}

void cmd_fit(const CommonFlags& flags, const std::string& method, const std::string& out_dir, std::ostream& out,
             std::ostream& err)
{
    const auto methods = resolve_methods(method);
    const auto specs = read_candidates(flags.candidates);
    const Dataset raw = load_training(flags, err);
    const Dataset ds = standardize(raw, standardize_options(flags, raw));
    const ModelArtifact model = train_model(ds, specs, methods, resolve_threads(flags.threads));

    const std::filesystem::path dir(out_dir);
    save_model(model, dir);
    {
        auto f = open_output(dir / "weights.csv");
        f << "method,criterion";
        for (std::size_t m = 0; m < model.candidates.size(); ++m) {
            f << ",w" << m + 1;
        }
        f << '\n';
        for (const auto& mw : model.methods) {
            f << method_name(mw.method) << ',' << (mw.criterion_value ? format_real(*mw.criterion_value) : "");
            for (Eigen::Index m = 0; m < mw.weights.size(); ++m) {
                f << ',' << format_real(mw.weights[m]);
            }
            f << '\n';
        }
    }
    Manifest manifest;
    manifest.command = "fit";
    manifest.seed = flags.seed;
    manifest.config = common_config(flags);
    manifest.config["method"] = method;
    manifest.inputs = {flags.scalars, flags.response, flags.curves, flags.candidates};
    manifest.outputs = {dir / "model.json", dir / "weights.csv"};
    manifest.write(dir / "manifest.json");
    out << "fitted " << model.candidates.size() << " candidates on " << ds.rows() << " rows; wrote "
        << dir.string() << '\n';
}

void cmd_predict(const std::string& model_dir, const std::string& scalars, const std::string& curves,
                 const std::string& out_path, std::ostream& out, std::ostream& err)
{
    const ModelArtifact model = load_model(model_dir);
    const Dataset ds = read_predictors(scalars, curves);
    if (ds.dropped_rows > 0) {
        err << "dropped " << ds.dropped_rows << " incomplete rows\n";
    }
    const ModelPrediction pred = apply_model(model, ds);
    const std::filesystem::path path(out_path);
    {
        auto f = open_output(path);
        for (std::size_t j = 0; j < pred.methods.size(); ++j) {
            f << (j ? "," : "") << method_name(pred.methods[j]);
        }
        f << ",fallback\n";
        for (Eigen::Index i = 0; i < pred.values.rows(); ++i) {
            for (Eigen::Index j = 0; j < pred.values.cols(); ++j) {
                f << (j ? "," : "") << format_real(pred.values(i, j));
            }
            f << ',' << (pred.fallback[static_cast<std::size_t>(i)] ? 1 : 0) << '\n';
        }
    }
    const auto fallbacks = std::count(pred.fallback.begin(), pred.fallback.end(), true);
    if (fallbacks > 0) {
        err << fallbacks << " rows fell back to the nearest training point\n";
    }
    const auto model_file = std::filesystem::is_directory(model_dir)
                                ? std::filesystem::path(model_dir) / "model.json"
                                : std::filesystem::path(model_dir);
    Manifest manifest;
    manifest.command = "predict";
    manifest.config = json{{"model", model_dir}, {"scalars", scalars}, {"curves", curves}};
    manifest.inputs = {model_file, scalars, curves};
    manifest.outputs = {path};
    manifest.write(sibling(path, ".manifest.json"));
    out << "wrote " << pred.values.rows() << " predictions to " << path.string() << '\n';
}

void cmd_compare(const CommonFlags& flags, double fraction, std::size_t reps, const std::string& out_path,
                 std::ostream& out, std::ostream& err)
{
    const auto specs = read_candidates(flags.candidates);
    const Dataset ds = load_training(flags, err);
    CompareOptions options;
    options.fraction = fraction;
    options.reps = reps;
    options.seed = flags.seed;
    options.standardize = resolve_columns(split_names(flags.standardize), ds);
    options.log_y = flags.log_y;
    options.threads = flags.threads;
    const auto rows = compare_methods(ds, specs, options);

    const std::filesystem::path path(out_path);
    {
        auto f = open_output(path);
        f << "method,mean_mspe,se,reps\n";
        for (const auto& row : rows) {
            f << method_name(row.method) << ',' << format_real(row.mean_mspe) << ','
              << (row.standard_error ? format_real(*row.standard_error) : "") << ',' << row.mspe.size() << '\n';
        }
    }
    Manifest manifest;
    manifest.command = "compare";
    manifest.seed = flags.seed;
    manifest.config = common_config(flags);
    manifest.config["split"] = fraction;
    manifest.config["reps"] = reps;
    manifest.inputs = {flags.scalars, flags.response, flags.curves, flags.candidates};
    manifest.outputs = {path};
    manifest.write(sibling(path, ".manifest.json"));
    for (const auto& row : rows) {
        out << method_name(row.method) << ' ' << format_real(row.mean_mspe) << '\n';
    }
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof(buf));
        EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    char byte[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(byte, sizeof(byte), "%02x", digest[i]);
        hex += byte;
    }
    return hex;
}

std::vector<CompareRow> compare_methods(const Dataset& data, const std::vector<CandidateSpec>& specs,
                                        const CompareOptions& options)
{
    if (options.reps < 1) {
        throw ConfigError("--reps must be at least 1");
    }
    const std::vector<Method> methods(kAllMethods.begin(), kAllMethods.end());
    std::vector<std::vector<double>> per_rep(options.reps);
    const RandomStream master(options.seed);
    parallel_for(options.reps, resolve_threads(options.threads), [&](std::size_t r) {
        RandomStream stream = master.substream(r);
        auto [train, test] = split(data, options.fraction, stream);
        StandardizeOptions st_options;
        st_options.z_columns = options.standardize;
        st_options.response = options.log_y ? ResponseTransform::LogCenter : ResponseTransform::None;
        const Standardization st = fit_standardization(train, st_options);
        const Dataset train_std = apply_standardization(train, st);
        const ModelArtifact model = train_model(train_std, specs, methods, 1);

        Dataset test_predictors = test;
        test_predictors.y = Vector();
        const ModelPrediction pred = apply_model(model, test_predictors);
        Vector y_test = test.y;
        for (Eigen::Index i = 0; i < y_test.size(); ++i) {
            y_test[i] = model.y_transform.apply(test.y[i]);
        }
        std::vector<double> losses;
        for (Eigen::Index j = 0; j < pred.transformed_values.cols(); ++j) {
            losses.push_back(mspe(y_test, pred.transformed_values.col(j)));
        }
        per_rep[r] = std::move(losses);
    });

    std::vector<CompareRow> rows;
    for (std::size_t j = 0; j < methods.size(); ++j) {
        CompareRow row;
        row.method = methods[j];
        for (const auto& losses : per_rep) {
            row.mspe.push_back(losses[j]);
        }
        const double count = static_cast<double>(row.mspe.size());
        double sum = 0.0;
        for (double v : row.mspe) {
            sum += v;
        }
        row.mean_mspe = sum / count;
        if (row.mspe.size() > 1) {
            double ss = 0.0;
            for (double v : row.mspe) {
                ss += (v - row.mean_mspe) * (v - row.mean_mspe);
            }
            row.standard_error = std::sqrt(ss / (count - 1.0) / count);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Partially linear functional score model averaging"};
    app.require_subcommand(1);
    app.set_version_flag("--version", PLFSMA_VERSION);

    auto add_threads = [](CLI::App* sub, std::size_t& threads) {
        sub->add_option("--threads", threads, "worker threads (0: PLFSMA_THREADS or all cores)");
    };

    DesignConfig sim;
    std::string sim_candidates = "m15a";
    std::string sim_out;
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo study for one design and setting");
    simulate->add_option("--design", sim.design)->required()->check(CLI::Range(1, 3));
    simulate->add_option("--n", sim.n)->required()->check(CLI::Range(std::size_t{10}, std::size_t{1000000}));
    simulate->add_option("--r2", sim.r2)->required()->check(CLI::Range(1e-12, 1.0 - 1e-12));
    simulate->add_option("--reps", sim.reps)->required()->check(CLI::PositiveNumber);
    simulate->add_option("--candidates", sim_candidates)
        ->required()
        ->check(CLI::IsMember({"m15a", "m15b", "m21"}, CLI::ignore_case));
    simulate->add_option("--seed", sim.seed)->required();
    simulate->add_option("--out", sim_out)->required();
    simulate->add_option("--grid", sim.grid_size)->check(CLI::Range(std::size_t{4}, std::size_t{100000}));
    add_threads(simulate, sim.threads);

    std::string fpca_curves, fpca_bandwidth = "auto", fpca_out;
    std::size_t fpca_components = 0;
    auto* fpca = app.add_subcommand("fpca", "Presmooth curves and estimate the principal components");
    fpca->add_option("--curves", fpca_curves)->required()->check(CLI::ExistingFile);
    fpca->add_option("--bandwidth", fpca_bandwidth, "presmoothing bandwidth or 'auto'");
    fpca->add_option("--components", fpca_components, "score columns to write (0: up to 10)");
    fpca->add_option("--out", fpca_out)->required();

    CommonFlags fit_flags;
    std::string fit_method, fit_out;
    auto* fit = app.add_subcommand("fit", "Fit candidates and averaging weights on a dataset");
    fit->add_option("--scalars", fit_flags.scalars)->required()->check(CLI::ExistingFile);
    fit->add_option("--response", fit_flags.response)->required()->check(CLI::ExistingFile);
    fit->add_option("--curves", fit_flags.curves)->required()->check(CLI::ExistingFile);
    fit->add_option("--candidates", fit_flags.candidates)->required()->check(CLI::ExistingFile);
    fit->add_option("--method", fit_method)
        ->required()
        ->check(CLI::IsMember({"mma", "aic", "bic", "saic", "sbic", "equal", "all"}, CLI::ignore_case));
    fit->add_option("--standardize", fit_flags.standardize, "comma-separated scalar columns, or 'all'");
    fit->add_flag("--log-y", fit_flags.log_y, "log-transform and centre the response");
    fit->add_option("--seed", fit_flags.seed);
    fit->add_option("--out", fit_out)->required();
    add_threads(fit, fit_flags.threads);

    std::string pred_model, pred_scalars, pred_curves, pred_out;
    auto* predict_cmd = app.add_subcommand("predict", "Predict responses with a fitted model");
    predict_cmd->add_option("--model", pred_model)->required()->check(CLI::ExistingPath);
    predict_cmd->add_option("--scalars", pred_scalars)->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--curves", pred_curves)->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--out", pred_out)->required();

    CommonFlags cmp_flags;
    double cmp_split = 0.8;
    std::size_t cmp_reps = 50;
    std::string cmp_out;
    auto* compare = app.add_subcommand("compare", "Repeated train/test comparison of all methods");
    compare->add_option("--scalars", cmp_flags.scalars)->required()->check(CLI::ExistingFile);
    compare->add_option("--response", cmp_flags.response)->required()->check(CLI::ExistingFile);
    compare->add_option("--curves", cmp_flags.curves)->required()->check(CLI::ExistingFile);
    compare->add_option("--candidates", cmp_flags.candidates)->required()->check(CLI::ExistingFile);
    compare->add_option("--split", cmp_split)->check(CLI::Range(1e-9, 1.0 - 1e-9));
    compare->add_option("--reps", cmp_reps)->check(CLI::PositiveNumber);
    compare->add_option("--seed", cmp_flags.seed);
    compare->add_option("--standardize", cmp_flags.standardize, "comma-separated scalar columns, or 'all'");
    compare->add_flag("--log-y", cmp_flags.log_y, "log-transform and centre the response");
    compare->add_option("--out", cmp_out)->required();
    add_threads(compare, cmp_flags.threads);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, e_out;
        const int code = app.exit(e, o, e_out);
        out << o.str();
        err << e_out.str();
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*simulate) {
            sim.candidate_set = *parse_candidate_set(sim_candidates);
            cmd_simulate(sim, sim_out, out);
        } else if (*fpca) {
            cmd_fpca(fpca_curves, fpca_bandwidth, fpca_components, fpca_out, out);
        } else if (*fit) {
            std::transform(fit_method.begin(), fit_method.end(), fit_method.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            cmd_fit(fit_flags, fit_method, fit_out, out, err);
        } else if (*predict_cmd) {
            cmd_predict(pred_model, pred_scalars, pred_curves, pred_out, out, err);
        } else if (*compare) {
            cmd_compare(cmp_flags, cmp_split, cmp_reps, cmp_out, out, err);
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const ContractViolation& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    }
    return kExitOk;
}

}  // namespace plfsma
