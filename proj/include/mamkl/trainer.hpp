#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mamkl/core.hpp"
#include "mamkl/featmap.hpp"
#include "mamkl/types.hpp"

namespace mamkl {

enum class Mode { mamkl, samkl, fixed_weight };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& text);

struct TrainConfig {
    double c1 = 1.0;
    double c2 = 1.0;
    double c3 = 1.0;
    double learning_rate = 1e-4;
    int batch_size = 256;
    int epochs = 50;
    int latent_k = 8;
    std::uint64_t seed = 0;
    // Divide the regularizer gradients by the number of batches per epoch.
    bool scale_reg_by_batches = false;
    // Gauss-Seidel block updates in the order V, A, b, omega.
    bool sequential_updates = false;
    // lp-norm baseline settings.
    double p_norm = 1.0;
    int outer_rounds = 5;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct MklModel {
    Mode mode = Mode::samkl;
    FeatureMapper mapper;
    std::vector<Vector> omegas;  // one per kernel, length feature_dim
    double bias = 0.0;
    Matrix V;  // k x 2s
    Matrix A;  // 2s x T
    Vector fixed_eta;  // fixed_weight mode: kernel weights on the unit lp-sphere
    std::vector<bool> seen_groups;  // groups with training samples
    TrainConfig config;

    std::size_t num_kernels() const { return omegas.size(); }
    Index num_groups() const { return A.cols(); }
};

// Zero weights, zero bias, A = ones, V ~ U(0,1) from the config seed.
MklModel init_model(const FeatureMapper& mapper, int num_groups, Mode mode, const TrainConfig& config);

// Per-kernel weights for one sample. `group` < 0 selects a = ones.
Vector kernel_weights(const MklModel& model, const Eigen::Ref<const Vector>& pattern, int group);

// f(x) = sum_m eta_m <omega_m, phi_m> + b. In fixed-weight mode the kernel
// weights enter as sqrt(eta_m), the lp-MKL parametrization.
double decision(const MklModel& model, const MappedDataset& data, Index i, int group);
double decision(const MklModel& model, const MappedSample& sample, int group);

// Full primal value over the given rows (all rows when empty).
double objective(const MklModel& model, const MappedDataset& data, const TrainConfig& config,
                 const std::vector<Index>& rows = {});

struct Gradients {
    std::vector<Vector> omegas;
    Matrix V;
    Matrix A;
    double bias = 0.0;
    std::size_t support_size = 0;
};

// Subgradients of the batch objective at the current parameters.
// `reg_scale` multiplies the regularizer terms (1 for the literal form).
Gradients gradients(const MklModel& model, const MappedDataset& data, const std::vector<Index>& batch,
                    const TrainConfig& config, double reg_scale = 1.0);

struct EpochRecord {
    int epoch = 0;
    double objective = 0.0;
    std::optional<double> val_auroc;
};

struct TrainResult {
    MklModel model;
    std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TrainConfig& config, const MappedDataset& data, Mode mode, const FeatureMapper& mapper,
                  const MappedDataset* validation = nullptr, const EpochCallback& on_epoch = {});

// Throws ShapeError unless the manifest declares the model's channels.
void check_channels(const MklModel& model, const DatasetManifest& manifest);

// Group used at prediction time: -1 (a = ones) for groups unseen in training.
int effective_group(const MklModel& model, int group);

// Scores for already mapped data; unseen groups fall back to a = ones.
Vector predict(const MklModel& model, const MappedDataset& data);
// Maps the dataset with the model's own mapper first.
Vector predict(const MklModel& model, const Dataset& dataset);

// Closed-form lp-MKL kernel weights from per-kernel weight norms:
// eta_m = |w_m|^{2/(p+1)} / (sum_j |w_j|^{2p/(p+1)})^{1/p}.
// All-zero norms give the uniform point of the unit lp-sphere.
Vector lp_kernel_weights(const Eigen::Ref<const Vector>& norms, double p);

// lp-norm MKL on completed kernels: alternate hinge SGD on (omega, b) with
// fixed weights and the closed-form weight update. `data` must be mapped
// with a zero- or mean-filling mapper.
TrainResult train_lp_baseline(const TrainConfig& config, const MappedDataset& data, const FeatureMapper& mapper,
                              const MappedDataset* validation = nullptr, const EpochCallback& on_epoch = {});

// Hinge SGD on (omega, b) for a fixed weight vector (no weight updates).
TrainResult train_fixed(const TrainConfig& config, const MappedDataset& data, const FeatureMapper& mapper,
                        const Vector& eta, const MappedDataset* validation = nullptr);

struct BandwidthChoice {
    double base_sigma = 1.0;            // pooled training std of the source
    std::vector<double> candidates;     // base_sigma^e, e = -2..2
    std::vector<double> val_auroc;
    double best = 1.0;
};

// Chooses one shared bandwidth for the rbf channels in `channels` by the
// validation AUROC of a uniform fixed-weight model on those channels only.
BandwidthChoice select_bandwidth(const Dataset& train, const Dataset& val, const std::vector<std::size_t>& channels,
                                 const TrainConfig& config);

}  // namespace mamkl
