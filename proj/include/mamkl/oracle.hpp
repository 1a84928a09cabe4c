#pragma once

#include <functional>
#include <vector>

#include "mamkl/core.hpp"
#include "mamkl/featmap.hpp"
#include "mamkl/random.hpp"
#include "mamkl/trainer.hpp"
#include "mamkl/types.hpp"

namespace mamkl::oracle {

// Raw (imputed) inputs of n samples: raw[m] is dim_m x n; patterns is 2s x n.
struct KernelInputs {
    std::vector<ChannelSpec> channels;
    std::vector<Matrix> raw;
    Matrix patterns;
    Eigen::VectorXi groups;

    Index size() const { return patterns.cols(); }
};

KernelInputs kernel_inputs(const FeatureMapper& mapper, const std::vector<MultiChannelSample>& samples);

struct ExactKernel {
    Matrix K_eta;
    std::vector<Matrix> base;  // exact K_m, zero wherever channel m is absent
};

inline constexpr Index kMaxExactSamples = 500;

// Exact base kernel of one channel: linear x'y or exp(-|x-y|^2 / (2 sigma^2)).
Matrix base_kernel(const ChannelSpec& spec, const Matrix& raw, const Matrix& patterns, Index channel);

// Combined kernel of the adaptive weights in matrix form:
// sum_m (W' e_m e_m' W) o K_m with W = (V'V (P o A_q)) o P.
// An empty A selects all-ones group factors.
ExactKernel exact_kernel_matrix(const KernelInputs& inputs, const Matrix& V, const Matrix& A = Matrix());

struct PsdResult {
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    bool pass = false;
};

// Pass iff lambda_min >= -tol * max(1, lambda_max).
PsdResult check_psd(const Matrix& K, double tol);

using Objective = std::function<double(const Vector&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / (2h).
Vector finite_diff_grad(const Objective& f, const Vector& params, double step);

double brute_auroc(const Vector& scores, const Vector& labels);
double brute_auprc(const Vector& scores, const Vector& labels);

// Parameter blocks flattened as [omega_1..omega_s, b, vec(V), vec(A)].
Vector flatten(const MklModel& model);
void unflatten(MklModel& model, const Vector& params);

struct GradCheckReport {
    double omega_rel_error = 0.0;
    double v_rel_error = 0.0;
    double a_rel_error = 0.0;
    double bias_rel_error = 0.0;
    double min_margin_gap = 0.0;  // min_i |1 - y_i f(x_i)| over the batch

    double max_rel_error() const;
};

// Compares `gradients` against finite differences of the batch objective.
GradCheckReport check_gradients(const MklModel& model, const MappedDataset& data, const std::vector<Index>& batch,
                                const TrainConfig& config, double step = 1e-6);

// Random instance for the gradient check: mapped data with missing channels
// and a random parameter state whose margins avoid the hinge kink by `gap`.
struct GradInstance {
    MklModel model;
    MappedDataset data;
    TrainConfig config;
};

GradInstance random_grad_instance(Rng& rng, Index n, Index s, Index k, Index T, Mode mode, double gap = 1e-3);

// Random raw inputs with rbf and linear channels and random missingness.
KernelInputs random_kernel_inputs(Rng& rng, Index n, Index s, Index T, double max_missing_rate);

}  // namespace mamkl::oracle
