#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "mamkl/types.hpp"

namespace mamkl {

namespace detail {

template <typename S, typename L>
void check_binary(const Eigen::MatrixBase<S>& scores, const Eigen::MatrixBase<L>& labels, Index* n_pos) {
    if (scores.size() != labels.size()) throw ShapeError("metrics: scores and labels differ in length");
    Index pos = 0;
    for (Index i = 0; i < labels.size(); ++i) pos += labels[i] > 0 ? 1 : 0;
    if (pos == 0 || pos == labels.size()) throw DataError("metrics: need both positive and negative labels");
    *n_pos = pos;
}

template <typename S>
std::vector<Index> descending_order(const Eigen::MatrixBase<S>& scores) {
    std::vector<Index> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });
    return order;
}

}  // namespace detail

// Rank statistic: P(score_pos > score_neg) + 0.5 P(tie).
template <typename S, typename L>
double auroc(const Eigen::MatrixBase<S>& scores, const Eigen::MatrixBase<L>& labels) {
    Index n_pos = 0;
    detail::check_binary(scores, labels, &n_pos);
    const Index n = scores.size();
    const Index n_neg = n - n_pos;
    const auto order = detail::descending_order(scores);
    // Sweep tie groups from the top; each positive beats every negative
    // ranked strictly below it and splits ties.
    double correct = 0.0;
    Index neg_above = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        Index pos_group = 0, neg_group = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] > 0 ? pos_group : neg_group)++;
            ++j;
        }
        const Index neg_below = n_neg - neg_above - neg_group;
        correct += static_cast<double>(pos_group) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(neg_group));
        neg_above += neg_group;
        i = j;
    }
    return correct / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Area under the precision-recall step curve; tied scores enter as one threshold.
template <typename S, typename L>
double auprc(const Eigen::MatrixBase<S>& scores, const Eigen::MatrixBase<L>& labels) {
    Index n_pos = 0;
    detail::check_binary(scores, labels, &n_pos);
    const auto order = detail::descending_order(scores);
    double area = 0.0;
    Index tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        Index tp_group = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] > 0) {
                ++tp_group;
            } else {
                ++fp;
            }
            ++j;
        }
        tp += tp_group;
        if (tp_group > 0) {
            const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            area += precision * static_cast<double>(tp_group) / static_cast<double>(n_pos);
        }
        i = j;
    }
    return area;
}

}  // namespace mamkl
