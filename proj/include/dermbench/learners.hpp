#pragma once

// The seven slide-level classifiers, trained from scratch on a design matrix.
// Class order is fixed to (basaloid, melanocytic, squamous) = indices 0, 1, 2.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dermbench/aggregator.hpp"
#include "dermbench/core.hpp"
#include "dermbench/tree.hpp"

namespace dermbench {

// Codes are stored in model files.
enum class ClassifierKind : std::uint8_t {
    LogisticRegression = 0,
    AdaBoost = 1,
    DecisionTree = 2,
    GradientBoosting = 3,
    RandomForest = 4,
    KNearestNeighbor = 5,
    NaiveBayes = 6,
};

/// Report order for accuracy/F1 tables.
inline constexpr std::array<ClassifierKind, 7> kAllClassifiers{
    ClassifierKind::KNearestNeighbor, ClassifierKind::DecisionTree, ClassifierKind::GradientBoosting,
    ClassifierKind::RandomForest,     ClassifierKind::LogisticRegression, ClassifierKind::NaiveBayes,
    ClassifierKind::AdaBoost};

std::string_view to_string(ClassifierKind kind);       // "logistic_regression"
std::string_view display_name(ClassifierKind kind);    // "Logistic Regression"
std::optional<ClassifierKind> parse_classifier_kind(std::string_view text);

/// Hyperparameters by name. Recognized names (unset ones take defaults):
///   logistic_regression: lambda (1e-2), max_iter (5000), tol (1e-6)
///   k_nearest_neighbor:  k (5)
///   decision_tree:       max_depth (0 = unlimited), min_samples_split (2)
///   random_forest:       n_estimators (100), max_depth (0), min_samples_split (2),
///                        bootstrap (1), feature_subsampling (1, sqrt(d) per split)
///   gradient_boosting:   n_estimators (100), learning_rate (0.1), max_depth (3)
///   ada_boost:           n_estimators (50), max_depth (1, in 1..3), learning_rate (1)
///   naive_bayes:         var_smoothing (1e-9)
struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::LogisticRegression;
    std::map<std::string, double> params;
    std::uint64_t seed = 0;

    double get(const std::string& name) const;
    /// Stable identifier, e.g. "gradient_boosting[learning_rate=0.1,n_estimators=50]".
    std::string id() const;

    bool operator==(const ClassifierSpec&) const = default;
};

/// Throws Error on unknown names or out-of-range values.
void validate(const ClassifierSpec& spec);

/// Default search grid per classifier kind.
std::vector<ClassifierSpec> default_grid(ClassifierKind kind, std::uint64_t seed);

// Learned parameters per kind.

struct LogisticParams {
    std::vector<double> feature_mean;   // standardizer, fit on training rows
    std::vector<double> feature_scale;
    Matrix weights;                     // d x 3, on standardized features
    std::vector<double> intercept;      // 3
    std::size_t iterations = 0;
    bool converged = false;
    bool operator==(const LogisticParams&) const = default;
};

struct TreeParamsModel {
    Tree tree;
    bool operator==(const TreeParamsModel&) const = default;
};

struct ForestParams {
    std::vector<Tree> trees;
    bool operator==(const ForestParams&) const = default;
};

struct BoostingParams {
    double learning_rate = 0.1;
    std::array<double, kNumClasses> init{};
    std::vector<std::array<Tree, kNumClasses>> stages;
    std::vector<double> training_loss;  // mean cross-entropy after init and after each stage
    bool operator==(const BoostingParams&) const = default;
};

struct AdaBoostParams {
    std::vector<Tree> learners;
    std::vector<double> alphas;
    std::array<double, kNumClasses> prior{};  // used when no learner beat chance
    std::vector<double> weighted_errors;      // per attempted round, including the rejected one
    bool operator==(const AdaBoostParams&) const = default;
};

struct NaiveBayesParams {
    std::array<double, kNumClasses> log_prior{};
    Matrix means;      // 3 x d
    Matrix variances;  // 3 x d, floored
    bool operator==(const NaiveBayesParams&) const = default;
};

struct KnnParams {
    Matrix x;
    std::vector<int> y;
    std::size_t k = 1;
    bool operator==(const KnnParams&) const = default;
};

using ModelParams = std::variant<LogisticParams, TreeParamsModel, ForestParams, BoostingParams, AdaBoostParams,
                                 NaiveBayesParams, KnnParams>;

class TrainedModel {
public:
    TrainedModel(ClassifierSpec spec, std::size_t dim, ModelParams params);

    const ClassifierSpec& spec() const { return spec_; }
    std::size_t dim() const { return dim_; }
    const ModelParams& params() const { return params_; }

    /// n x 3 class probabilities; rows sum to 1.
    Matrix predict_proba(const Matrix& rows) const;
    /// argmax of predict_proba, lowest class index on ties.
    std::vector<int> predict(const Matrix& rows) const;

    bool operator==(const TrainedModel&) const = default;

private:
    ClassifierSpec spec_;
    std::size_t dim_ = 0;
    ModelParams params_;
};

/// Fits `spec` on rows `x` with labels `y` in {0, 1, 2}. Requires at least two
/// classes and finite features.
TrainedModel train(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y);
TrainedModel train(const ClassifierSpec& spec, const DesignMatrix& train_set);

/// Kinds whose fitted model with n estimators is exactly the first n stages of
/// a larger fit (random forest, gradient boosting, AdaBoost).
bool grows_in_stages(ClassifierKind kind);
/// The model `train` would return with `n_estimators` set to `n`, cut from a
/// fit with at least `n` estimators.
TrainedModel truncate_estimators(const TrainedModel& model, std::size_t n);

Matrix predict_proba(const TrainedModel& model, const Matrix& rows);

std::vector<int> argmax_rows(const Matrix& proba);

/// Penalized softmax cross-entropy used by logistic regression:
///   f = mean_i CE_i + (lambda / 2) ||W||^2,  grad_W = X'(P - Y)/n + lambda W,
///   grad_b = sum_i (P - Y)_i / n.
struct SoftmaxObjective {
    double value = 0.0;
    Matrix grad_w;
    std::vector<double> grad_b;
};
SoftmaxObjective softmax_objective(const Matrix& x, std::span<const int> y, const Matrix& w,
                                   std::span<const double> b, double lambda);

// Model files: "MODL" | u32 version | u8 kind | u64 seed | hyperparameters |
// kind payload | u32 CRC-32 of all preceding bytes.
inline constexpr std::uint32_t kModelVersion = 1;
std::vector<std::uint8_t> encode_model(const TrainedModel& model);
TrainedModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

// Cross-validation

struct CvPlan {
    std::size_t n_folds = 5;
    bool stratified = true;
    std::uint64_t seed = 0;
};

/// Fold id per row. Stratified: within each class, rows are shuffled and dealt
/// round-robin, continuing the deal across classes so fold sizes stay balanced.
std::vector<int> assign_folds(std::span<const int> y, const CvPlan& plan);

struct CvResult {
    std::size_t best_index = 0;
    ClassifierSpec best;
    std::vector<double> mean_accuracy;              // per grid entry
    std::vector<std::vector<double>> fold_accuracy; // [grid][fold]
    std::vector<int> folds;
};

/// Every spec sees the same folds. Best = highest mean held-out accuracy,
/// earliest grid position on ties.
CvResult cross_validate(std::span<const ClassifierSpec> grid, const Matrix& x, std::span<const int> y,
                        const CvPlan& plan);
CvResult cross_validate(std::span<const ClassifierSpec> grid, const DesignMatrix& train_set, const CvPlan& plan);

}  // namespace dermbench
