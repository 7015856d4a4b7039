#include "dermbench/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dermbench {

const TreeNode& Tree::leaf_for(std::span<const double> x) const {
    if (nodes.empty()) throw Error("tree: empty tree");
    const TreeNode* node = &nodes[0];
    while (!node->is_leaf()) {
        node = &nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(node->feature)] <= node->threshold
                                                   ? node->left
                                                   : node->right)];
    }
    return *node;
}

std::size_t Tree::depth() const {
    if (nodes.empty()) return 0;
    std::size_t best = 0;
    std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        const auto [idx, d] = stack.back();
        stack.pop_back();
        const auto& n = nodes[static_cast<std::size_t>(idx)];
        best = std::max(best, d);
        if (!n.is_leaf()) {
            stack.push_back({n.left, d + 1});
            stack.push_back({n.right, d + 1});
        }
    }
    return best;
}

SortedColumns::SortedColumns(const Matrix& x)
    : n_(x.rows), d_(x.cols), order_(x.rows * x.cols), values_(x.rows * x.cols) {
    for (std::size_t f = 0; f < d_; ++f) {
        double* col = values_.data() + f * n_;
        for (std::size_t i = 0; i < n_; ++i) col[i] = x(i, f);
        auto* out = order_.data() + f * n_;
        std::iota(out, out + n_, 0u);
        std::stable_sort(out, out + n_, [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    }
}

namespace {

struct GiniCriterion {
    std::span<const int> y;
    std::span<const double> w;

    struct Stats {
        std::array<double, kNumClasses> c{};
        double total = 0.0;
        std::size_t count = 0;
    };

    void add(Stats& s, std::uint32_t i) const {
        const double wi = w[i];
        s.c[static_cast<std::size_t>(y[i])] += wi;
        s.total += wi;
        ++s.count;
    }
    static Stats minus(const Stats& a, const Stats& b) {
        Stats s;
        for (std::size_t k = 0; k < kNumClasses; ++k) s.c[k] = a.c[k] - b.c[k];
        s.total = a.total - b.total;
        s.count = a.count - b.count;
        return s;
    }
    // Sum_k c_k^2 / W; maximizing the children's sum minimizes weighted Gini.
    static double score(const Stats& s) {
        if (s.total <= 0.0) return 0.0;
        double sq = 0.0;
        for (double v : s.c) sq += v * v;
        return sq / s.total;
    }
    static bool pure(const Stats& s) {
        return std::count_if(s.c.begin(), s.c.end(), [](double v) { return v > 0.0; }) <= 1;
    }
    void make_leaf(TreeNode& node, const Stats& s, std::span<const std::uint32_t>) const {
        for (std::size_t k = 0; k < kNumClasses; ++k) node.value[k] = s.total > 0.0 ? s.c[k] / s.total : 0.0;
    }
};

struct SquaredErrorCriterion {
    std::span<const double> target;
    std::span<const double> w;
    const LeafValueFn* leaf_value;

    struct Stats {
        double sum = 0.0;
        double total = 0.0;
        std::size_t count = 0;
    };

    void add(Stats& s, std::uint32_t i) const {
        s.sum += w[i] * target[i];
        s.total += w[i];
        ++s.count;
    }
    static Stats minus(const Stats& a, const Stats& b) { return {a.sum - b.sum, a.total - b.total, a.count - b.count}; }
    static double score(const Stats& s) { return s.total > 0.0 ? s.sum * s.sum / s.total : 0.0; }
    static bool pure(const Stats&) { return false; }
    void make_leaf(TreeNode& node, const Stats&, std::span<const std::uint32_t> rows) const {
        node.value[0] = (*leaf_value)(rows);
    }
};

template <class Criterion>
class Builder {
public:
    using Stats = typename Criterion::Stats;

    Builder(const Matrix& x, const SortedColumns& sorted, std::span<const double> weights, const TreeParams& params,
            Criterion crit, Rng* rng)
        : sorted_(sorted), params_(params), crit_(std::move(crit)), rng_(rng), d_(x.cols), goes_left_(x.rows, 0) {
        if (sorted.rows() != x.rows || sorted.features() != x.cols) throw Error("tree: sorted columns do not match data");
        if (weights.size() != x.rows) throw Error("tree: weight vector size mismatch");
        for (std::size_t i = 0; i < x.rows; ++i) {
            if (weights[i] > 0.0) ++n_active_;
        }
        if (n_active_ == 0) throw Error("tree: no samples with positive weight");
        seg_.resize(d_ * n_active_);
        for (std::size_t f = 0; f < d_; ++f) {
            std::size_t k = 0;
            for (std::uint32_t row : sorted.column(f)) {
                if (weights[row] > 0.0) seg_[f * n_active_ + k++] = row;
            }
        }
        tmp_.resize(n_active_);
        feature_pool_.resize(d_);
        std::iota(feature_pool_.begin(), feature_pool_.end(), std::size_t{0});
        if (params_.max_features != 0 && params_.max_features < d_ && rng_ == nullptr) {
            throw Error("tree: feature subsampling needs a random stream");
        }
    }

    Tree build() {
        tree_.nodes.clear();
        grow(0, n_active_, 0);
        return std::move(tree_);
    }

private:
    double value(std::size_t f, std::uint32_t row) const { return sorted_.value(f, row); }
    std::uint32_t* segment(std::size_t f, std::size_t begin) { return seg_.data() + f * n_active_ + begin; }

    std::vector<std::size_t> candidate_features() {
        if (params_.max_features == 0 || params_.max_features >= d_) return feature_pool_;
        std::vector<std::size_t> pool = feature_pool_;
        for (std::size_t i = 0; i < params_.max_features; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng_->below(d_ - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(params_.max_features);
        std::sort(pool.begin(), pool.end());
        return pool;
    }

    std::int32_t grow(std::size_t begin, std::size_t end, int depth) {
        const auto node_index = static_cast<std::int32_t>(tree_.nodes.size());
        tree_.nodes.emplace_back();

        Stats total{};
        {
            const std::uint32_t* rows = segment(0, begin);
            for (std::size_t p = 0; p < end - begin; ++p) crit_.add(total, rows[p]);
        }
        const std::span<const std::uint32_t> node_rows(segment(0, begin), end - begin);

        const bool depth_limited = params_.max_depth > 0 && depth >= params_.max_depth;
        if (depth_limited || total.count < params_.min_samples_split || Criterion::pure(total)) {
            crit_.make_leaf(tree_.nodes[static_cast<std::size_t>(node_index)], total, node_rows);
            return node_index;
        }

        const double parent_score = Criterion::score(total);
        const double min_gain = 1e-12 * std::max(std::abs(parent_score), 1e-300);
        double best_gain = min_gain;
        std::int64_t best_feature = -1;
        double best_threshold = 0.0;

        for (std::size_t f : candidate_features()) {
            const std::uint32_t* rows = segment(f, begin);
            const std::size_t n = end - begin;
            Stats left{};
            for (std::size_t p = 0; p + 1 < n; ++p) {
                crit_.add(left, rows[p]);
                const double a = value(f, rows[p]);
                const double b = value(f, rows[p + 1]);
                if (!(a < b)) continue;
                const Stats right = Criterion::minus(total, left);
                const double gain = Criterion::score(left) + Criterion::score(right) - parent_score;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<std::int64_t>(f);
                    double t = a + (b - a) / 2.0;
                    if (!(t < b)) t = a;
                    best_threshold = t;
                }
            }
        }

        if (best_feature < 0) {
            crit_.make_leaf(tree_.nodes[static_cast<std::size_t>(node_index)], total, node_rows);
            return node_index;
        }

        const auto bf = static_cast<std::size_t>(best_feature);
        std::size_t n_left = 0;
        {
            const std::uint32_t* rows = segment(bf, begin);
            for (std::size_t p = 0; p < end - begin; ++p) {
                const bool left = value(bf, rows[p]) <= best_threshold;
                goes_left_[rows[p]] = left ? 1 : 0;
                n_left += left ? 1 : 0;
            }
        }
        for (std::size_t f = 0; f < d_; ++f) {
            std::uint32_t* rows = segment(f, begin);
            const std::size_t n = end - begin;
            std::size_t l = 0, r = n_left;
            for (std::size_t p = 0; p < n; ++p) {
                if (goes_left_[rows[p]]) {
                    tmp_[l++] = rows[p];
                } else {
                    tmp_[r++] = rows[p];
                }
            }
            std::copy(tmp_.begin(), tmp_.begin() + static_cast<std::ptrdiff_t>(n), rows);
        }

        const std::size_t mid = begin + n_left;
        const auto left_child = grow(begin, mid, depth + 1);
        const auto right_child = grow(mid, end, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(node_index)];
        node.feature = static_cast<std::int32_t>(bf);
        node.threshold = best_threshold;
        node.left = left_child;
        node.right = right_child;
        crit_.make_leaf(node, total, node_rows);  // interior nodes keep their distribution too
        return node_index;
    }

    const SortedColumns& sorted_;
    TreeParams params_;
    Criterion crit_;
    Rng* rng_;
    std::size_t d_;
    std::size_t n_active_ = 0;
    std::vector<std::uint32_t> seg_;
    std::vector<std::uint32_t> tmp_;
    std::vector<std::uint8_t> goes_left_;
    std::vector<std::size_t> feature_pool_;
    Tree tree_;
};

}  // namespace

Tree fit_classification_tree(const Matrix& x, const SortedColumns& sorted, std::span<const int> y,
                             std::span<const double> weights, const TreeParams& params, Rng* rng) {
    if (y.size() != x.rows) throw Error("tree: label vector size mismatch");
    for (int label : y) {
        if (label < 0 || label >= static_cast<int>(kNumClasses)) throw Error("tree: label out of range");
    }
    Builder<GiniCriterion> builder(x, sorted, weights, params, GiniCriterion{y, weights}, rng);
    return builder.build();
}

Tree fit_regression_tree(const Matrix& x, const SortedColumns& sorted, std::span<const double> target,
                         std::span<const double> weights, const TreeParams& params, const LeafValueFn& leaf_value,
                         Rng* rng) {
    if (target.size() != x.rows) throw Error("tree: target vector size mismatch");
    Builder<SquaredErrorCriterion> builder(x, sorted, weights, params,
                                           SquaredErrorCriterion{target, weights, &leaf_value}, rng);
    return builder.build();
}

}  // namespace dermbench
