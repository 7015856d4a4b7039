#pragma once

// Paired comparison of two models scored on the same cases: DeLong's test for
// correlated AUCs, Venkatraman's permutation test on whole ROC curves, and a
// paired t-test on per-classifier accuracies.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermbench/core.hpp"

namespace dermbench {

struct PairedScores {
    std::vector<int> y_true;  // 0/1
    std::vector<double> scores_a;
    std::vector<double> scores_b;
};

/// Equal lengths, 0/1 labels, both classes present, finite scores.
void validate(const PairedScores& ps);

struct DelongResult {
    double auc_a = 0.0;
    double auc_b = 0.0;
    double var_a = 0.0;
    double var_b = 0.0;
    double covariance = 0.0;
    double var_difference = 0.0;
    double z = 0.0;
    double p = 1.0;
};

/// z = (auc_a - auc_b) / sqrt(var); a variance below 1e-12 gives z = 0, p = 1.
DelongResult delong_test(const PairedScores& ps);

struct VenkatramanResult {
    /// Observed statistic divided by n^2, the area between the two rank-space
    /// error curves.
    double roc_difference = 0.0;
    double statistic = 0.0;  // sum over cutoffs of |errors_b - errors_a|
    double p = 1.0;
    std::size_t permutations = 0;
    std::size_t at_least_as_extreme = 0;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kDefaultPermutations = 2000;

/// Paired permutation test: each permutation exchanges the two models' ranks
/// on a random subset of cases. p = (1 + #{perm >= observed}) / (B + 1).
VenkatramanResult venkatraman_test(const PairedScores& ps, std::size_t permutations = kDefaultPermutations,
                                   std::uint64_t seed = 0);

struct TTestResult {
    double t = 0.0;
    std::size_t df = 0;
    double p = 1.0;
    double mean_difference = 0.0;
};

/// Differences are a - b. All-zero differences give t = 0, p = 1.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

struct CategoryComparison {
    Category category = Category::Basaloid;
    DelongResult delong;
    VenkatramanResult venkatraman;
};

struct ComparisonResult {
    std::string backend_a;
    std::string backend_b;
    std::string classifier;
    std::size_t n_test = 0;
    std::vector<CategoryComparison> per_category;
    std::vector<std::string> accuracy_classifiers;
    std::vector<double> accuracy_a;
    std::vector<double> accuracy_b;
    TTestResult ttest;
};

/// One-vs-rest comparison for every class on n x 3 probability matrices.
ComparisonResult compare_probabilities(std::span<const int> y_true, const Matrix& proba_a, const Matrix& proba_b,
                                       std::size_t permutations, std::uint64_t seed);

nlohmann::ordered_json to_json(const ComparisonResult& result);

}  // namespace dermbench
