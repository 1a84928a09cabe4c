#pragma once

#include <cstdint>
#include <vector>

#include "mamkl/random.hpp"
#include "mamkl/types.hpp"

namespace mamkl {

// Length-2s indicator: entry m marks channel m present, entry s+m marks it absent.
using MissingPattern = Vector;

inline MissingPattern encode_pattern(const std::vector<bool>& present) {
    const auto s = static_cast<Index>(present.size());
    if (s < 1) throw ShapeError("encode_pattern: need at least one channel");
    MissingPattern p(2 * s);
    for (Index m = 0; m < s; ++m) {
        p[m] = present[static_cast<std::size_t>(m)] ? 1.0 : 0.0;
        p[s + m] = 1.0 - p[m];
    }
    return p;
}

namespace detail {

template <typename PDerived, typename VDerived>
void check_pattern_shape(const Eigen::MatrixBase<PDerived>& p, const Eigen::MatrixBase<VDerived>& V) {
    if (p.size() % 2 != 0 || p.size() == 0) throw ShapeError("pattern length must be 2s");
    if (V.cols() != p.size()) throw ShapeError("embedding width must equal pattern length");
}

}  // namespace detail

// Missing-pattern adaptive weights: eta_m = p_m v_m' sum_j p_j v_j.
template <typename PDerived, typename VDerived>
VectorX<typename VDerived::Scalar> eta_mamkl(const Eigen::MatrixBase<PDerived>& p,
                                            const Eigen::MatrixBase<VDerived>& V) {
    detail::check_pattern_shape(p, V);
    using Scalar = typename VDerived::Scalar;
    const Index s = p.size() / 2;
    const VectorX<Scalar> pooled = V * p.template cast<Scalar>();
    VectorX<Scalar> eta = V.leftCols(s).transpose() * pooled;
    return eta.cwiseProduct(p.head(s).template cast<Scalar>());
}

// Sample-adaptive weights: eta_m = e_m' V'V (p o a). The p_m prefactor is
// dropped; absent channels are neutralized by their zero feature vector.
template <typename PDerived, typename VDerived, typename ADerived>
VectorX<typename VDerived::Scalar> eta_samkl(const Eigen::MatrixBase<PDerived>& p,
                                            const Eigen::MatrixBase<VDerived>& V,
                                            const Eigen::MatrixBase<ADerived>& a) {
    detail::check_pattern_shape(p, V);
    if (a.size() != p.size()) throw ShapeError("group vector length must equal pattern length");
    using Scalar = typename VDerived::Scalar;
    const Index s = p.size() / 2;
    const VectorX<Scalar> scaled = p.template cast<Scalar>().cwiseProduct(a.template cast<Scalar>());
    const VectorX<Scalar> pooled = V * scaled;
    return V.leftCols(s).transpose() * pooled;
}

struct AdaptiveParams {
    Matrix V;  // k x 2s pattern embedding
    Matrix A;  // 2s x T group factors
};

// V ~ U(0,1) i.i.d., A = ones.
inline AdaptiveParams init_params(Index s, Index k, Index T, std::uint64_t seed) {
    if (s < 1 || k < 1 || T < 1) throw ShapeError("init_params: s, k, T must be positive");
    AdaptiveParams out;
    out.V.resize(k, 2 * s);
    Rng rng(seed);
    for (Index j = 0; j < out.V.cols(); ++j) {
        for (Index i = 0; i < k; ++i) out.V(i, j) = rng.uniform();
    }
    out.A = Matrix::Ones(2 * s, T);
    return out;
}

}  // namespace mamkl
