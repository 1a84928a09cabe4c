#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mamkl/types.hpp"

namespace mamkl {

enum class KernelKind { linear, rbf };
enum class ApproxKind { rff, fastfood };

std::string to_string(KernelKind kind);
std::string to_string(ApproxKind kind);
KernelKind kernel_kind_from_string(const std::string& text);
ApproxKind approx_kind_from_string(const std::string& text);

struct ChannelSpec {
    int id = 0;
    std::string name;
    int dim = 0;
    KernelKind kernel = KernelKind::linear;
    double bandwidth = 1.0;  // sigma of exp(-|x-y|^2 / (2 sigma^2)), rbf only
    int feature_dim = 0;     // dim for linear, 2 * #frequencies for rbf
    ApproxKind approx = ApproxKind::rff;
    std::uint64_t map_seed = 0;

    int num_frequencies() const { return feature_dim / 2; }

    // Throws DataError when the invariants on dims and bandwidth fail.
    void validate() const;
};

nlohmann::json to_json(const ChannelSpec& spec);
ChannelSpec channel_spec_from_json(const nlohmann::json& j, int id);

// Raw values of one present channel. `missing` flags entries that were
// empty in the source file; their `values` slot holds NaN until imputed.
struct ChannelValue {
    Vector values;
    Eigen::Array<bool, Eigen::Dynamic, 1> missing;

    ChannelValue() = default;
    explicit ChannelValue(Vector v)
        : values(std::move(v)), missing(Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(values.size(), false)) {}
    ChannelValue(Vector v, Eigen::Array<bool, Eigen::Dynamic, 1> m) : values(std::move(v)), missing(std::move(m)) {}

    bool partially_missing() const { return missing.any(); }
};

struct MultiChannelSample {
    std::string sample_id;
    int group_id = 0;
    int label = 1;  // +1 or -1
    std::vector<std::optional<ChannelValue>> channels;

    // A channel whose every entry is flagged missing counts as absent.
    bool present(std::size_t m) const { return channels[m].has_value() && !channels[m]->missing.all(); }
    std::vector<bool> presence() const;
};

struct DatasetFiles {
    std::map<std::string, std::filesystem::path> channels;
    std::filesystem::path labels;
    std::filesystem::path groups;
};

struct DatasetManifest {
    std::string name;
    std::vector<ChannelSpec> channels;
    std::optional<ChannelSpec> concat;  // rbf channel over all declared channels
    DatasetFiles files;
    int num_groups = 1;
    std::filesystem::path base_dir;  // relative file paths resolve against this

    std::size_t num_channels() const { return channels.size(); }
    // Declared channels plus the concatenated one, if enabled.
    std::size_t total_kernels() const { return channels.size() + (concat ? 1 : 0); }
    std::vector<ChannelSpec> all_channels() const;
    int total_dim() const;

    void validate() const;
};

DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Defaults used when the concatenated channel is declared "auto".
ChannelSpec make_auto_concat(const std::vector<ChannelSpec>& channels, std::uint64_t seed_hint);

struct Dataset {
    DatasetManifest manifest;
    std::vector<MultiChannelSample> samples;
    std::vector<Vector> channel_means;  // one per declared channel, from training data
    std::vector<std::string> rejected_ids;  // samples dropped because every channel was absent

    std::size_t size() const { return samples.size(); }
};

// Mean of observed entries per coordinate; coordinates never observed get 0.
std::vector<Vector> compute_channel_means(const DatasetManifest& manifest,
                                          const std::vector<MultiChannelSample>& samples);

Dataset load_dataset(const DatasetManifest& manifest);

// Writes manifest.json plus per-channel, label and group CSVs under `dir`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

struct DatasetSplits {
    Dataset train;
    Dataset val;
    Dataset test;
};

DatasetSplits split_dataset(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed,
                            bool stratify = false);

// Returns a copy holding only the given sample rows; means are copied.
Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& rows);

struct ValidationReport {
    std::size_t n_samples = 0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    std::vector<double> missing_rate;        // per declared channel
    std::vector<std::size_t> partial_count;  // present channels with some empty cells
    double incomplete_fraction = 0.0;        // samples missing at least one channel
    std::vector<std::size_t> group_counts;
    std::size_t rejected = 0;
    std::vector<std::string> warnings;

    nlohmann::json to_json(const DatasetManifest& manifest) const;
};

ValidationReport validate_dataset(const Dataset& dataset);

}  // namespace mamkl
