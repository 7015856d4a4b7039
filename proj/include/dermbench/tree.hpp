#pragma once

// CART trees shared by the tree-based learners. Splits are exhaustive over
// thresholds at midpoints of consecutive distinct values; x <= threshold goes
// left. Equal gains keep the lowest feature index, then the lowest threshold.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dermbench/core.hpp"

namespace dermbench {

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    /// Leaf payload: class proportions (classification) or value[0] (regression).
    std::array<double, kNumClasses> value{};

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    const TreeNode& leaf_for(std::span<const double> x) const;
    std::size_t depth() const;
    bool operator==(const Tree&) const = default;
};

struct TreeParams {
    int max_depth = 0;  // 0 = unlimited
    std::size_t min_samples_split = 2;
    std::size_t max_features = 0;  // features tried per split; 0 = all
};

/// Per-feature row order (ascending value, ties by row index), computed once
/// per data set and reused by every tree grown on it.
class SortedColumns {
public:
    explicit SortedColumns(const Matrix& x);
    std::span<const std::uint32_t> column(std::size_t feature) const {
        return {order_.data() + feature * n_, n_};
    }
    double value(std::size_t feature, std::uint32_t row) const { return values_[feature * n_ + row]; }
    std::size_t rows() const { return n_; }
    std::size_t features() const { return d_; }

private:
    std::size_t n_ = 0;
    std::size_t d_ = 0;
    std::vector<std::uint32_t> order_;
    std::vector<double> values_;  // column-major copy of the data
};

/// Gini tree on weighted samples; rows with zero weight are ignored.
/// `rng` is required when max_features subsamples.
Tree fit_classification_tree(const Matrix& x, const SortedColumns& sorted, std::span<const int> y,
                             std::span<const double> weights, const TreeParams& params, Rng* rng = nullptr);

/// Computes a leaf value from the row indices that reached the leaf.
using LeafValueFn = std::function<double(std::span<const std::uint32_t>)>;

/// Least-squares tree on `target`; leaf values come from `leaf_value`.
Tree fit_regression_tree(const Matrix& x, const SortedColumns& sorted, std::span<const double> target,
                         std::span<const double> weights, const TreeParams& params, const LeafValueFn& leaf_value,
                         Rng* rng = nullptr);

}  // namespace dermbench
