#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mamkl/core.hpp"

namespace mamkl {

// Multi-channel benchmark with a known generator. Channel m carries a latent
// Gaussian signal x_m; the label is the sign of
//     sum_{m present} c_m(p, t) w_m' x_m + noise,
// where the effective channel weight
//     c_m(p, t) = alpha_{t,m} - 4 * coupling * [partner(m) absent]
// depends on the missing pattern (coupling knob) and on the group t
// (alpha_{t,m} = 1 + heterogeneity * U(-1, 1)). partner(m) = (m + 1) mod s.
struct SyntheticConfig {
    int n_samples = 4000;
    int s = 5;
    int T = 10;
    std::vector<int> dims;              // empty: 4 per channel
    std::vector<double> missing_rates;  // empty: 0.2 per channel
    std::vector<std::string> kernels;   // empty: all linear
    double bandwidth = 4.0;             // rbf channels
    int rbf_feature_dim = 256;
    std::string approx = "rff";
    double partial_rate = 0.0;  // per-entry missingness inside present channels
    double coupling = 0.5;
    double heterogeneity = 0.5;
    double noise = 0.5;
    bool concat = false;
    std::uint64_t seed = 1;

    // Fills defaulted per-channel lists and checks ranges; throws DataError.
    void normalize();
};

nlohmann::json to_json(const SyntheticConfig& config);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

struct SyntheticData {
    Dataset dataset;
    Vector bayes_score;  // noiseless latent score per sample (monotone in P(y=1|x))
    nlohmann::json truth;
};

// Generator parameters come from `config.seed`; the samples come from
// `sample_seed` when given, else from `config.seed`. Fixing the former and
// varying the latter draws fresh samples from the same generator.
SyntheticData generate_synthetic(SyntheticConfig config, std::optional<std::uint64_t> sample_seed = std::nullopt);

// Writes the dataset (manifest + CSVs) and truth.json into `dir`.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

// Monte Carlo estimate of the AUROC achieved by the Bayes score.
double bayes_auroc(const SyntheticConfig& config, int n_draws, std::uint64_t mc_seed);

}  // namespace mamkl
