#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mamkl/core.hpp"
#include "mamkl/random.hpp"
#include "mamkl/types.hpp"

namespace mamkl {

// Random Fourier features for exp(-|x-y|^2 / (2 sigma^2)).
template <typename Scalar>
struct RffParams {
    MatrixX<Scalar> frequencies;  // dim x D, entries ~ N(0, sigma^-2)
    Scalar bandwidth = 1;
    std::uint64_t seed = 0;

    Index input_dim() const { return frequencies.rows(); }
    Index num_frequencies() const { return frequencies.cols(); }
    Index output_dim() const { return 2 * frequencies.cols(); }
};

template <typename Scalar = double>
RffParams<Scalar> sample_rff_params(Index dim, Index num_frequencies, Scalar bandwidth, std::uint64_t seed) {
    if (dim < 1) throw ShapeError("rff: dim must be positive");
    if (num_frequencies < 1) throw ShapeError("rff: number of frequencies must be positive");
    if (!(bandwidth > 0)) throw ShapeError("rff: bandwidth must be positive");
    RffParams<Scalar> params;
    params.bandwidth = bandwidth;
    params.seed = seed;
    params.frequencies.resize(dim, num_frequencies);
    Rng rng(seed);
    // Column-major fill: frequency vector g_j is drawn as one contiguous block.
    for (Index j = 0; j < num_frequencies; ++j) {
        for (Index i = 0; i < dim; ++i) params.frequencies(i, j) = static_cast<Scalar>(rng.normal()) / bandwidth;
    }
    return params;
}

// Interleaves sin/cos of the projections: [sin(z_1), cos(z_1), ...] / sqrt(D).
template <typename Derived>
VectorX<typename Derived::Scalar> sincos_features(const Eigen::MatrixBase<Derived>& projections) {
    using Scalar = typename Derived::Scalar;
    const Index d = projections.size();
    const Scalar scale = std::sqrt(Scalar(1) / static_cast<Scalar>(d));
    VectorX<Scalar> out(2 * d);
    for (Index j = 0; j < d; ++j) {
        out[2 * j] = scale * std::sin(projections[j]);
        out[2 * j + 1] = scale * std::cos(projections[j]);
    }
    return out;
}

template <typename Derived, typename Scalar = typename Derived::Scalar>
VectorX<Scalar> map_rff(const Eigen::MatrixBase<Derived>& x, const RffParams<Scalar>& params) {
    if (x.size() != params.input_dim()) throw ShapeError("rff: input dimension mismatch");
    const VectorX<Scalar> z = params.frequencies.transpose() * x;
    return sincos_features(z);
}

inline Index next_power_of_two(Index n) {
    Index p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Unnormalized in-place Walsh-Hadamard transform; size must be a power of two.
template <typename Derived>
void fwht(Eigen::MatrixBase<Derived>& v) {
    const Index n = v.size();
    if (n == 0 || (n & (n - 1)) != 0) throw ShapeError("fwht: length must be a power of two");
    for (Index h = 1; h < n; h <<= 1) {
        for (Index i = 0; i < n; i += 2 * h) {
            for (Index j = i; j < i + h; ++j) {
                const auto a = v[j];
                const auto b = v[j + h];
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
    }
}

// One Fastfood block: frequencies S H G Pi H B / (sigma sqrt(d')).
template <typename Scalar>
struct FastfoodBlock {
    VectorX<Scalar> signs;       // B, entries +-1
    std::vector<Index> permutation;  // Pi
    VectorX<Scalar> gaussian;    // G, N(0,1)
    VectorX<Scalar> scaling;     // S, chi_{d'} / |G|_F
};

template <typename Scalar>
struct FastfoodParams {
    Index input_dim = 0;
    Index padded_dim = 0;
    Index num_frequencies = 0;
    Scalar bandwidth = 1;
    std::uint64_t seed = 0;
    std::vector<FastfoodBlock<Scalar>> blocks;

    Index output_dim() const { return 2 * num_frequencies; }
};

template <typename Scalar = double>
FastfoodParams<Scalar> build_fastfood(Index dim, Index num_frequencies, Scalar bandwidth, std::uint64_t seed) {
    if (dim < 1) throw ShapeError("fastfood: dim must be positive");
    if (num_frequencies < 1) throw ShapeError("fastfood: number of frequencies must be positive");
    if (!(bandwidth > 0)) throw ShapeError("fastfood: bandwidth must be positive");
    FastfoodParams<Scalar> params;
    params.input_dim = dim;
    params.padded_dim = next_power_of_two(dim);
    params.num_frequencies = num_frequencies;
    params.bandwidth = bandwidth;
    params.seed = seed;
    const Index dp = params.padded_dim;
    const Index nblocks = (num_frequencies + dp - 1) / dp;
    Rng rng(seed);
    for (Index b = 0; b < nblocks; ++b) {
        FastfoodBlock<Scalar> block;
        block.signs.resize(dp);
        for (Index i = 0; i < dp; ++i) block.signs[i] = rng.uniform() < 0.5 ? Scalar(-1) : Scalar(1);
        block.permutation.resize(static_cast<std::size_t>(dp));
        std::iota(block.permutation.begin(), block.permutation.end(), Index{0});
        rng.shuffle(block.permutation);
        block.gaussian.resize(dp);
        for (Index i = 0; i < dp; ++i) block.gaussian[i] = static_cast<Scalar>(rng.normal());
        const Scalar gnorm = block.gaussian.norm();
        block.scaling.resize(dp);
        for (Index i = 0; i < dp; ++i) {
            Scalar chi2 = 0;
            for (Index r = 0; r < dp; ++r) {
                const auto g = static_cast<Scalar>(rng.normal());
                chi2 += g * g;
            }
            block.scaling[i] = std::sqrt(chi2) / gnorm;
        }
        params.blocks.push_back(std::move(block));
    }
    return params;
}

// Projections of x onto the implicit Fastfood frequency vectors.
template <typename Derived, typename Scalar = typename Derived::Scalar>
VectorX<Scalar> fastfood_projections(const Eigen::MatrixBase<Derived>& x, const FastfoodParams<Scalar>& params) {
    if (x.size() != params.input_dim) throw ShapeError("fastfood: input dimension mismatch");
    const Index dp = params.padded_dim;
    const Scalar scale = Scalar(1) / (params.bandwidth * std::sqrt(static_cast<Scalar>(dp)));
    VectorX<Scalar> padded = VectorX<Scalar>::Zero(dp);
    padded.head(params.input_dim) = x;
    VectorX<Scalar> out(params.num_frequencies);
    VectorX<Scalar> t(dp), u(dp);
    Index filled = 0;
    for (const auto& block : params.blocks) {
        t = block.signs.cwiseProduct(padded);
        fwht(t);
        for (Index i = 0; i < dp; ++i) u[i] = t[block.permutation[static_cast<std::size_t>(i)]];
        u.array() *= block.gaussian.array();
        fwht(u);
        u.array() *= block.scaling.array() * scale;
        const Index take = std::min(dp, params.num_frequencies - filled);
        out.segment(filled, take) = u.head(take);
        filled += take;
    }
    return out;
}

template <typename Derived, typename Scalar = typename Derived::Scalar>
VectorX<Scalar> map_fastfood(const Eigen::MatrixBase<Derived>& x, const FastfoodParams<Scalar>& params) {
    return sincos_features(fastfood_projections(x, params));
}

// Replaces entries flagged in `missing` with the corresponding training means.
template <typename Derived, typename MeanDerived>
VectorX<typename Derived::Scalar> impute_partial(const Eigen::MatrixBase<Derived>& x,
                                                 const Eigen::Array<bool, Eigen::Dynamic, 1>& missing,
                                                 const Eigen::MatrixBase<MeanDerived>& means) {
    if (x.size() != missing.size() || x.size() != means.size()) throw ShapeError("impute: length mismatch");
    return missing.select(means, x);
}

struct IdentityMap {};

using ChannelMapKind = std::variant<IdentityMap, RffParams<double>, FastfoodParams<double>>;

// How absent channels are handled before mapping. `none` maps them to the
// zero vector (adaptive models); `zero` and `mean` fill the raw vector first
// so that every kernel is complete (baselines).
enum class AbsentFill { none, zero, mean };

std::string to_string(AbsentFill fill);
AbsentFill absent_fill_from_string(const std::string& text);

struct MappedSample {
    std::vector<Vector> features;  // one per kernel, length feature_dim
    std::vector<bool> present;     // one per kernel
    Vector pattern;                // length 2 * #kernels
};

// Column-major storage of a mapped dataset: features[m] is d_m x n, so each
// sample's mapped channel is a contiguous column.
struct MappedDataset {
    std::vector<Matrix> features;
    Matrix patterns;  // 2s x n
    Vector labels;    // +-1
    Eigen::VectorXi groups;
    std::vector<std::string> ids;
    int num_groups = 1;

    Index size() const { return labels.size(); }
    std::size_t num_kernels() const { return features.size(); }
    bool present(std::size_t m, Index i) const { return patterns(static_cast<Index>(m), i) != 0.0; }
};

class FeatureMapper {
public:
    FeatureMapper() = default;
    FeatureMapper(std::vector<ChannelSpec> kernels, std::size_t num_declared, std::vector<Vector> means,
                  AbsentFill fill = AbsentFill::none);

    // Builds maps for every declared channel plus the concatenated one.
    static FeatureMapper build(const DatasetManifest& manifest, std::vector<Vector> means,
                               AbsentFill fill = AbsentFill::none);

    std::size_t num_kernels() const { return kernels_.size(); }
    std::size_t num_declared() const { return num_declared_; }
    bool has_concat() const { return kernels_.size() > num_declared_; }
    const std::vector<ChannelSpec>& kernels() const { return kernels_; }
    const std::vector<Vector>& means() const { return means_; }
    AbsentFill fill() const { return fill_; }
    const ChannelMapKind& map(std::size_t m) const { return maps_[m]; }

    // Maps one already imputed raw vector through kernel m.
    Vector apply(std::size_t m, const Eigen::Ref<const Vector>& raw) const;

    // Imputed raw vectors per kernel (the concatenated one included) and
    // presence flags, before any feature map is applied.
    struct RawInputs {
        std::vector<Vector> raw;
        std::vector<bool> present;
    };
    RawInputs raw_inputs(const MultiChannelSample& sample) const;

    MappedSample map_sample(const MultiChannelSample& sample) const;
    MappedDataset map_dataset(const Dataset& dataset) const;

    nlohmann::json to_json() const;
    static FeatureMapper from_json(const nlohmann::json& j);

private:
    std::vector<ChannelSpec> kernels_;
    std::size_t num_declared_ = 0;
    std::vector<Vector> means_;
    AbsentFill fill_ = AbsentFill::none;
    std::vector<ChannelMapKind> maps_;
};

}  // namespace mamkl
