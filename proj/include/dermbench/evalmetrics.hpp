#pragma once

// Classification metrics over the three-class problem, plus one-vs-rest ROC
// and precision-recall curves.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermbench/core.hpp"

namespace dermbench {

struct ConfusionMatrix {
    // counts[true][predicted]
    std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

    std::size_t total() const;
    std::size_t row_sum(std::size_t true_class) const;
    std::size_t col_sum(std::size_t predicted_class) const;
    std::size_t trace() const;
    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred);

struct RocCurve {
    /// Descending; thresholds[0] is +inf and maps to the (0, 0) corner.
    std::vector<double> thresholds;
    std::vector<double> fpr;
    std::vector<double> tpr;
};

/// y_true holds 0/1. Throws "undefined ROC" unless both classes occur.
RocCurve roc_curve(std::span<const int> y_true, std::span<const double> scores);
/// Trapezoidal area under a curve.
double auroc(const RocCurve& curve);
/// Rank-based area: P(s+ > s-) + P(s+ = s-)/2, via midranks.
double auroc(std::span<const int> y_true, std::span<const double> scores);

struct PrCurve {
    std::vector<double> thresholds;  // descending, one per distinct score
    std::vector<double> precision;
    std::vector<double> recall;      // non-decreasing, ends at 1
};

/// Throws when there are no positives.
PrCurve pr_curve(std::span<const int> y_true, std::span<const double> scores);
/// Step-wise area: sum over points of (recall_k - recall_{k-1}) * precision_k.
double average_precision(const PrCurve& curve);

/// Unweighted mean of the three one-vs-rest AUROCs; throws when a class is absent.
double macro_auroc(std::span<const int> y_true, const Matrix& proba);
/// AUROC of the flattened one-hot labels against all n*3 probabilities.
double micro_auroc(std::span<const int> y_true, const Matrix& proba);

struct ClassMetrics {
    std::size_t support = 0;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0;
    double recall = 0.0;  // identical to tpr
    double f1 = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
    std::optional<double> auroc;  // absent when the class is missing or is everything
};

struct EvaluationReport {
    std::string classifier;
    std::string backend;
    std::size_t n = 0;
    double accuracy = 0.0;
    std::array<ClassMetrics, kNumClasses> per_class{};
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::optional<double> macro_auroc;
    std::optional<double> micro_auroc;
    ConfusionMatrix confusion;
    std::array<std::optional<RocCurve>, kNumClasses> roc;
    std::array<std::optional<PrCurve>, kNumClasses> pr;
    /// Zero-denominator cases, e.g. "precision_undefined:basaloid". Those rates report 0.
    std::vector<std::string> flags;
};

/// Predicted label = argmax of proba (lowest class on ties).
EvaluationReport classification_report(std::span<const int> y_true, const Matrix& proba,
                                       std::string classifier = {}, std::string backend = {});

nlohmann::ordered_json to_json(const RocCurve& curve);
nlohmann::ordered_json to_json(const PrCurve& curve);
nlohmann::ordered_json to_json(const EvaluationReport& report);

}  // namespace dermbench
