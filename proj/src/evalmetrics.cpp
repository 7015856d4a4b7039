#include "dermbench/evalmetrics.hpp"

#include "dermbench/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dermbench {

namespace {

void check_binary(std::span<const int> y_true, std::span<const double> scores, std::size_t& pos, std::size_t& neg) {
    if (y_true.size() != scores.size()) throw Error("label and score lengths differ");
    pos = neg = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] != 0 && y_true[i] != 1) throw Error("binary labels must be 0 or 1");
        if (!std::isfinite(scores[i])) throw Error("non-finite score");
        (y_true[i] ? pos : neg) += 1;
    }
}

// Indices by descending score, ties by index.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

std::vector<int> one_vs_rest(std::span<const int> y_true, std::size_t k) {
    std::vector<int> out(y_true.size());
    for (std::size_t i = 0; i < y_true.size(); ++i) out[i] = y_true[i] == static_cast<int>(k) ? 1 : 0;
    return out;
}

std::vector<double> column(const Matrix& m, std::size_t k) {
    std::vector<double> out(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) out[i] = m(i, k);
    return out;
}

void check_multiclass(std::span<const int> y_true, const Matrix& proba) {
    if (proba.rows != y_true.size()) throw Error("label and probability row counts differ");
    if (proba.cols != kNumClasses) throw Error("probability matrix must have 3 columns");
    for (int y : y_true) {
        if (y < 0 || y >= static_cast<int>(kNumClasses)) throw Error("label out of range");
    }
}

double safe_ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::size_t ConfusionMatrix::total() const {
    std::size_t t = 0;
    for (const auto& r : counts) t += std::accumulate(r.begin(), r.end(), std::size_t{0});
    return t;
}

std::size_t ConfusionMatrix::row_sum(std::size_t c) const {
    return std::accumulate(counts[c].begin(), counts[c].end(), std::size_t{0});
}

std::size_t ConfusionMatrix::col_sum(std::size_t c) const {
    std::size_t t = 0;
    for (const auto& r : counts) t += r[c];
    return t;
}

std::size_t ConfusionMatrix::trace() const {
    std::size_t t = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) t += counts[k][k];
    return t;
}

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred) {
    if (y_true.size() != y_pred.size()) throw Error("label and prediction lengths differ");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] < 0 || y_true[i] >= static_cast<int>(kNumClasses) || y_pred[i] < 0 ||
            y_pred[i] >= static_cast<int>(kNumClasses)) {
            throw Error("label out of range");
        }
        ++cm.counts[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
    }
    return cm;
}

RocCurve roc_curve(std::span<const int> y_true, std::span<const double> scores) {
    std::size_t pos = 0, neg = 0;
    check_binary(y_true, scores, pos, neg);
    if (pos == 0 || neg == 0) throw Error("undefined ROC: need both positive and negative cases");
    const auto order = descending_order(scores);
    RocCurve c;
    c.thresholds.push_back(std::numeric_limits<double>::infinity());
    c.fpr.push_back(0.0);
    c.tpr.push_back(0.0);
    std::size_t tp = 0, fp = 0;
    for (std::size_t p = 0; p < order.size(); ++p) {
        (y_true[order[p]] ? tp : fp) += 1;
        if (p + 1 < order.size() && scores[order[p + 1]] == scores[order[p]]) continue;
        c.thresholds.push_back(scores[order[p]]);
        c.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
        c.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
    }
    return c;
}

double auroc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.fpr.size(); ++i) {
        area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) / 2.0;
    }
    return area;
}

double auroc(std::span<const int> y_true, std::span<const double> scores) {
    std::size_t pos = 0, neg = 0;
    check_binary(y_true, scores, pos, neg);
    if (pos == 0 || neg == 0) throw Error("undefined ROC: need both positive and negative cases");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Rank sums are half-integers, exact in double at any realistic n.
    double pos_rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t p = i; p < j; ++p) {
            if (y_true[order[p]]) pos_rank_sum += midrank;
        }
        i = j;
    }
    const double np = static_cast<double>(pos), nn = static_cast<double>(neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

PrCurve pr_curve(std::span<const int> y_true, std::span<const double> scores) {
    std::size_t pos = 0, neg = 0;
    check_binary(y_true, scores, pos, neg);
    if (pos == 0) throw Error("undefined precision-recall curve: no positive cases");
    const auto order = descending_order(scores);
    PrCurve c;
    std::size_t tp = 0, fp = 0;
    for (std::size_t p = 0; p < order.size(); ++p) {
        (y_true[order[p]] ? tp : fp) += 1;
        if (p + 1 < order.size() && scores[order[p + 1]] == scores[order[p]]) continue;
        c.thresholds.push_back(scores[order[p]]);
        c.precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        c.recall.push_back(static_cast<double>(tp) / static_cast<double>(pos));
    }
    return c;
}

double average_precision(const PrCurve& curve) {
    double ap = 0.0, prev = 0.0;
    for (std::size_t i = 0; i < curve.recall.size(); ++i) {
        ap += (curve.recall[i] - prev) * curve.precision[i];
        prev = curve.recall[i];
    }
    return ap;
}

double macro_auroc(std::span<const int> y_true, const Matrix& proba) {
    check_multiclass(y_true, proba);
    double sum = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        const auto y = one_vs_rest(y_true, k);
        if (std::find(y.begin(), y.end(), 1) == y.end()) {
            throw Error("macro AUROC: class " + std::string(to_string(kClassOrder[k])) + " is missing");
        }
        sum += auroc(y, column(proba, k));
    }
    return sum / static_cast<double>(kNumClasses);
}

double micro_auroc(std::span<const int> y_true, const Matrix& proba) {
    check_multiclass(y_true, proba);
    std::vector<int> y(proba.data.size());
    for (std::size_t i = 0; i < proba.rows; ++i) {
        for (std::size_t k = 0; k < kNumClasses; ++k) y[i * kNumClasses + k] = y_true[i] == static_cast<int>(k) ? 1 : 0;
    }
    return auroc(y, proba.data);
}

EvaluationReport classification_report(std::span<const int> y_true, const Matrix& proba, std::string classifier,
                                       std::string backend) {
    check_multiclass(y_true, proba);
    if (y_true.empty()) throw Error("classification report: no rows");
    EvaluationReport r;
    r.classifier = std::move(classifier);
    r.backend = std::move(backend);
    r.n = y_true.size();
    const auto pred = argmax_rows(proba);
    r.confusion = confusion_matrix(y_true, pred);
    r.accuracy = static_cast<double>(r.confusion.trace()) / static_cast<double>(r.n);

    bool all_auc = true;
    double auc_sum = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        auto& m = r.per_class[k];
        const std::string name(to_string(kClassOrder[k]));
        m.support = r.confusion.row_sum(k);
        m.tp = r.confusion.counts[k][k];
        m.fn = m.support - m.tp;
        m.fp = r.confusion.col_sum(k) - m.tp;
        m.tn = r.n - m.tp - m.fn - m.fp;
        if (m.tp + m.fp == 0) r.flags.push_back("precision_undefined:" + name);
        if (m.tp + m.fn == 0) r.flags.push_back("recall_undefined:" + name);
        if (m.fp + m.tn == 0) r.flags.push_back("fpr_undefined:" + name);
        m.precision = safe_ratio(m.tp, m.tp + m.fp);
        m.recall = safe_ratio(m.tp, m.tp + m.fn);
        m.tpr = m.recall;
        m.fpr = safe_ratio(m.fp, m.fp + m.tn);
        m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;

        if (m.support > 0 && m.support < r.n) {
            const auto y = one_vs_rest(y_true, k);
            const auto s = column(proba, k);
            m.auroc = auroc(y, s);
            r.roc[k] = roc_curve(y, s);
            r.pr[k] = pr_curve(y, s);
            auc_sum += *m.auroc;
        } else {
            all_auc = false;
            r.flags.push_back("auroc_undefined:" + name);
        }
        r.macro_precision += m.precision / kNumClasses;
        r.macro_recall += m.recall / kNumClasses;
        r.macro_f1 += m.f1 / kNumClasses;
    }
    if (all_auc) {
        r.macro_auroc = auc_sum / static_cast<double>(kNumClasses);
        r.micro_auroc = micro_auroc(y_true, proba);
    }
    return r;
}

nlohmann::ordered_json to_json(const RocCurve& c) {
    nlohmann::ordered_json j;
    j["thresholds"] = c.thresholds;  // +inf serializes as null
    j["fpr"] = c.fpr;
    j["tpr"] = c.tpr;
    return j;
}

nlohmann::ordered_json to_json(const PrCurve& c) {
    nlohmann::ordered_json j;
    j["thresholds"] = c.thresholds;
    j["precision"] = c.precision;
    j["recall"] = c.recall;
    j["average_precision"] = average_precision(c);
    return j;
}

nlohmann::ordered_json to_json(const EvaluationReport& r) {
    using nlohmann::ordered_json;
    const auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    ordered_json j;
    j["classifier"] = r.classifier;
    j["backend"] = r.backend;
    j["n"] = r.n;
    j["accuracy"] = r.accuracy;
    j["macro"] = {{"precision", r.macro_precision}, {"recall", r.macro_recall}, {"f1", r.macro_f1}};
    ordered_json auc;
    auc["macro"] = opt(r.macro_auroc);
    auc["micro"] = opt(r.micro_auroc);
    ordered_json per_class_auc = ordered_json::object();
    ordered_json per_class = ordered_json::object();
    ordered_json roc = ordered_json::object();
    ordered_json pr = ordered_json::object();
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        const std::string name(to_string(kClassOrder[k]));
        const auto& m = r.per_class[k];
        per_class_auc[name] = opt(m.auroc);
        per_class[name] = {{"support", m.support}, {"tp", m.tp},         {"fp", m.fp},   {"fn", m.fn},
                           {"tn", m.tn},           {"precision", m.precision}, {"recall", m.recall},
                           {"f1", m.f1},           {"tpr", m.tpr},       {"fpr", m.fpr}, {"auroc", opt(m.auroc)}};
        roc[name] = r.roc[k] ? to_json(*r.roc[k]) : ordered_json(nullptr);
        pr[name] = r.pr[k] ? to_json(*r.pr[k]) : ordered_json(nullptr);
    }
    auc["per_class"] = per_class_auc;
    j["auroc"] = auc;
    j["per_class"] = per_class;
    ordered_json cm;
    cm["labels"] = ordered_json::array();
    for (auto c : kClassOrder) cm["labels"].push_back(std::string(to_string(c)));
    cm["counts"] = ordered_json::array();
    for (const auto& row : r.confusion.counts) cm["counts"].push_back(row);
    j["confusion_matrix"] = cm;
    j["flags"] = r.flags;
    j["roc_curves"] = roc;
    j["pr_curves"] = pr;
    return j;
}

}  // namespace dermbench
