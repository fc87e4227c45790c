// Writes the bundled synthetic dataset used by the end-to-end tests: a
// design-2 sample with the first five scalar predictors kept, plus a
// candidate list pairing every nonempty subset of {Z1, Z2} with every
// nonempty subset of the first three scores (21 candidates).
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plfsma/ingest.hpp"
#include "plfsma/model_io.hpp"
#include "plfsma/simulate.hpp"

namespace {

std::vector<std::vector<std::size_t>> nonempty_subsets(std::size_t count)
{
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t size = 1; size <= count; ++size) {
        for (unsigned mask = 1; mask < (1u << count); ++mask) {
            if (static_cast<std::size_t>(__builtin_popcount(mask)) != size) {
                continue;
            }
            std::vector<std::size_t> cols;
            for (std::size_t j = 0; j < count; ++j) {
                if (mask & (1u << j)) {
                    cols.push_back(j);
                }
            }
            out.push_back(std::move(cols));
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Generate the synthetic fixture dataset"};
    std::string out_dir = "tests/data";
    std::uint64_t seed = 20240601;
    std::size_t n = 200;
    double r2 = 0.5;
    app.add_option("--out", out_dir);
    app.add_option("--seed", seed);
    app.add_option("--n", n);
    app.add_option("--r2", r2);
    CLI11_PARSE(app, argc, argv);

    try {
        plfsma::DesignConfig config;
        config.design = 2;
        config.n = n;
        config.r2 = r2;
        config.seed = seed;
        plfsma::RandomStream stream(seed);
        const plfsma::SimulatedData sim = plfsma::gen_design(config, stream);

        plfsma::Dataset ds;
        ds.y = sim.y;
        ds.z = sim.z.leftCols(5);
        ds.z_names = {"Z1", "Z2", "Z3", "Z4", "Z5"};
        ds.curves = sim.curves;
        ds.z_transforms.assign(5, plfsma::ColumnTransform{});

        const std::filesystem::path dir(out_dir);
        std::filesystem::create_directories(dir);
        plfsma::write_dataset(ds, {dir / "scalars.csv", dir / "response.csv", dir / "curves.csv"});
        std::vector<plfsma::CandidateSpec> specs;
        for (const auto& z : nonempty_subsets(2)) {
            for (const auto& xi : nonempty_subsets(3)) {
                specs.push_back({z, xi, std::nullopt});
            }
        }
        std::ofstream(dir / "candidates.json") << plfsma::candidates_to_json(specs);
        std::cout << "wrote " << n << " rows to " << dir.string() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
