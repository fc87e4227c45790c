#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "plfsma/model_io.hpp"

using namespace plfsma;
namespace fs = std::filesystem;

namespace {

const fs::path kData = PLFSMA_TEST_DATA;

Dataset fixture()
{
    return read_dataset({kData / "scalars.csv", kData / "response.csv", kData / "curves.csv"});
}

std::vector<Method> all_methods()
{
    return {kAllMethods.begin(), kAllMethods.end()};
}

const ModelArtifact& trained()
{
    static const ModelArtifact model = [] {
        const Dataset ds = standardize(fixture(), {{"Z1", "Z2"}, ResponseTransform::Standardize});
        return train_model(ds, read_candidates(kData / "candidates.json"), all_methods(), 1);
    }();
    return model;
}

}  // namespace

TEST_CASE("candidate JSON parsing")
{
    const auto specs = parse_candidates(R"([{"z": [0, 1], "xi": [0], "h": "auto"}, {"z": [], "xi": [1, 2], "h": 0.3}])");
    REQUIRE(specs.size() == 2);
    CHECK(specs[0].z_cols == std::vector<std::size_t>{0, 1});
    CHECK_FALSE(specs[0].bandwidth.has_value());
    CHECK(specs[1].z_cols.empty());
    CHECK(specs[1].bandwidth == 0.3);
    CHECK(parse_candidates(candidates_to_json(specs)).size() == 2);
    CHECK(parse_candidates(candidates_to_json(specs))[1].xi_cols == specs[1].xi_cols);

    CHECK_THROWS_AS(parse_candidates("[]"), ConfigError);
    CHECK_THROWS_AS(parse_candidates("{"), ConfigError);
    CHECK_THROWS_AS(parse_candidates(R"([{"z": [0], "xi": [0], "bw": 1}])"), ConfigError);
    CHECK_THROWS_AS(parse_candidates(R"([{"z": [-1], "xi": [0]}])"), ConfigError);
    CHECK_THROWS_AS(parse_candidates(R"([{"z": [0], "xi": [0], "h": "wide"}])"), ConfigError);
    try {
        parse_candidates(R"([{"z": [0], "xi": [0]}, {"z": [0], "xi": []}])");
        FAIL("expected rejection");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("candidate 1") != std::string::npos);
        CHECK(msg.find("xi_cols non-empty") != std::string::npos);
    }
}

TEST_CASE("fixture candidates are the scalar-by-score subset grid")
{
    const auto specs = read_candidates(kData / "candidates.json");
    CHECK(specs.size() == 21);
    for (const auto& s : specs) {
        CHECK(!s.z_cols.empty());
        CHECK(s.z_cols.size() <= 2);
        CHECK(!s.xi_cols.empty());
        CHECK(s.xi_cols.back() < 3);
    }
}

TEST_CASE("training validates the candidate list against the data")
{
    const Dataset ds = fixture();
    CHECK_THROWS_AS(train_model(ds, parse_candidates(R"([{"z": [9], "xi": [0]}])"), all_methods()), ConfigError);
    CHECK_THROWS_AS(train_model(ds, parse_candidates(R"([{"z": [0], "xi": [0]}])"), {}), ConfigError);
    Dataset no_y = ds;
    no_y.y.resize(0);
    CHECK_THROWS_AS(train_model(no_y, parse_candidates(R"([{"z": [0], "xi": [0]}])"), all_methods()), DataError);
}

TEST_CASE("trained model reproduces its own fitted values")
{
    const ModelArtifact& model = trained();
    CHECK(model.methods.size() == 6);
    CHECK(model.candidates.size() == 21);
    CHECK(model.k_max == 3);
    CHECK(model.z_transforms[0].scale != 1.0);
    CHECK(model.z_transforms[2].identity());
    for (const auto& m : model.methods) {
        CHECK(m.weights.sum() == doctest::Approx(1.0));
        CHECK(m.weights.minCoeff() >= 0.0);
        CHECK(m.criterion_value.has_value() == (m.method == Method::MMA));
    }

    Dataset raw = fixture();
    const Vector y = raw.y;
    raw.y.resize(0);
    const ModelPrediction pred = apply_model(model, raw);
    REQUIRE(pred.values.cols() == 6);
    for (std::size_t j = 0; j < 6; ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        CHECK((pred.transformed_values.col(col) - model.methods[j].fitted).cwiseAbs().maxCoeff() <= 1e-9);
        for (Eigen::Index i = 0; i < 5; ++i) {
            CHECK(pred.values(i, col) == doctest::Approx(model.y_transform.invert(pred.transformed_values(i, col))));
        }
    }
    // Averaged fits live on the original scale after inversion.
    CHECK(std::abs(pred.values.col(0).mean() - y.mean()) <= 0.1 * (y.array() - y.mean()).abs().mean() + 1e-9);
}

TEST_CASE("serialization round-trips exactly")
{
    const ModelArtifact& model = trained();
    const std::string text = serialize_model(model);
    const ModelArtifact back = parse_model(text);
    CHECK(serialize_model(back) == text);
    CHECK(back.basis.eigenfunctions == model.basis.eigenfunctions);
    CHECK(back.presmooth_bandwidth == model.presmooth_bandwidth);
    CHECK(back.candidates[7].kernel_points == model.candidates[7].kernel_points);
    CHECK(back.methods[0].weights == model.methods[0].weights);
    CHECK(back.z_names == model.z_names);

    Dataset raw = fixture();
    raw.y.resize(0);
    CHECK(apply_model(back, raw).values == apply_model(model, raw).values);

    const fs::path dir = fs::temp_directory_path() / ("plfsma_model_" + std::to_string(::getpid()));
    save_model(model, dir);
    CHECK(serialize_model(load_model(dir)) == text);
    CHECK(serialize_model(load_model(dir / "model.json")) == text);
    fs::remove_all(dir);
}

TEST_CASE("malformed model files are data errors")
{
    CHECK_THROWS_AS(parse_model("not json"), DataError);
    CHECK_THROWS_AS(parse_model(R"({"format": "other"})"), DataError);
    std::string text = serialize_model(trained());
    const auto pos = text.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 12, "\"version\": 9");
    CHECK_THROWS_AS(parse_model(text), DataError);
    CHECK_THROWS_AS(load_model(fs::path("/nonexistent/plfsma")), DataError);
}

TEST_CASE("prediction inputs must match the training layout")
{
    const ModelArtifact& model = trained();
    Dataset raw = fixture();
    raw.y.resize(0);

    Dataset renamed = raw;
    renamed.z_names[1] = "other";
    CHECK_THROWS_AS(apply_model(model, renamed), DataError);

    Dataset regridded = raw;
    for (double& t : regridded.curves.grid) {
        t *= 2.0;
    }
    try {
        apply_model(model, regridded);
        FAIL("expected rejection");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("curve grid mismatch") != std::string::npos);
    }
}
