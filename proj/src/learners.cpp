#include "dermbench/learners.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace dermbench {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

ConstRowMap as_eigen(const Matrix& m) { return ConstRowMap(m.data.data(), static_cast<Eigen::Index>(m.rows),
                                                           static_cast<Eigen::Index>(m.cols)); }

struct KindInfo {
    ClassifierKind kind;
    std::string_view key;
    std::string_view display;
    std::map<std::string, double> defaults;
};

const std::vector<KindInfo>& kind_table() {
    static const std::vector<KindInfo> table{
        {ClassifierKind::LogisticRegression, "logistic_regression", "Logistic Regression",
         {{"lambda", 1e-2}, {"max_iter", 5000}, {"tol", 1e-6}}},
        {ClassifierKind::AdaBoost, "ada_boost", "AdaBoost",
         {{"n_estimators", 50}, {"max_depth", 1}, {"learning_rate", 1.0}}},
        {ClassifierKind::DecisionTree, "decision_tree", "Decision Tree", {{"max_depth", 0}, {"min_samples_split", 2}}},
        {ClassifierKind::GradientBoosting, "gradient_boosting", "Gradient Boosting",
         {{"n_estimators", 100}, {"learning_rate", 0.1}, {"max_depth", 3}}},
        {ClassifierKind::RandomForest, "random_forest", "Random Forest",
         {{"n_estimators", 100}, {"max_depth", 0}, {"min_samples_split", 2}, {"bootstrap", 1},
          {"feature_subsampling", 1}}},
        {ClassifierKind::KNearestNeighbor, "k_nearest_neighbor", "k-Nearest Neighbor (kNN)", {{"k", 5}}},
        {ClassifierKind::NaiveBayes, "naive_bayes", "Naive Bayes", {{"var_smoothing", 1e-9}}},
    };
    return table;
}

const KindInfo& info(ClassifierKind kind) {
    for (const auto& k : kind_table()) {
        if (k.kind == kind) return k;
    }
    throw Error("unknown classifier kind");
}

std::string format_number(double v) {
    std::ostringstream ss;
    ss.precision(12);
    ss << v;
    return ss.str();
}

bool is_integer(double v) { return std::isfinite(v) && std::floor(v) == v; }

void check_inputs(const Matrix& x, std::span<const int> y) {
    if (x.rows == 0 || x.cols == 0) throw Error("train: empty training set");
    if (y.size() != x.rows) throw Error("train: label count does not match rows");
    for (double v : x.data) {
        if (!std::isfinite(v)) throw Error("train: non-finite feature value");
    }
    std::set<int> classes;
    for (int label : y) {
        if (label < 0 || label >= static_cast<int>(kNumClasses)) throw Error("train: label out of range");
        classes.insert(label);
    }
    if (classes.size() < 2) throw Error("train: at least two classes are required");
}

std::array<double, kNumClasses> class_frequencies(std::span<const int> y, std::span<const double> w = {}) {
    std::array<double, kNumClasses> f{};
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        f[static_cast<std::size_t>(y[i])] += wi;
        total += wi;
    }
    for (auto& v : f) v /= total;
    return f;
}

// Row-wise softmax in place; -inf entries get probability 0.
void softmax_rows(Matrix& z) {
    for (std::size_t i = 0; i < z.rows; ++i) {
        auto r = z.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double sum = 0.0;
        for (auto& v : r) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (auto& v : r) v /= sum;
    }
}

// ---------------------------------------------------------------------------
// Logistic regression

struct Objective {
    double value = 0.0;
    RowMatrix grad_w;
    Eigen::RowVectorXd grad_b;
};

// Penalized mean cross-entropy for softmax regression. The gradient is only
// computed when asked for.
Objective evaluate_softmax(const Eigen::Ref<const RowMatrix>& x, std::span<const int> y, const RowMatrix& w,
                           const Eigen::RowVectorXd& b, double lambda, bool with_gradient) {
    const auto n = x.rows();
    RowMatrix z = x * w;
    z.rowwise() += b;
    double ce = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = z.row(i).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index k = 0; k < z.cols(); ++k) {
            z(i, k) = std::exp(z(i, k) - mx);
            sum += z(i, k);
        }
        const auto yi = static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]);
        ce -= std::log(z(i, yi) / sum);
        z.row(i) /= sum;
    }
    Objective out;
    out.value = ce / static_cast<double>(n) + 0.5 * lambda * w.squaredNorm();
    if (with_gradient) {
        for (Eigen::Index i = 0; i < n; ++i) z(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)])) -= 1.0;
        z /= static_cast<double>(n);
        out.grad_w = x.transpose() * z + lambda * w;
        out.grad_b = z.colwise().sum();
    }
    return out;
}

double inf_norm(const Objective& o) {
    return std::max(o.grad_w.cwiseAbs().maxCoeff(), o.grad_b.cwiseAbs().maxCoeff());
}

LogisticParams fit_logistic(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y) {
    const double lambda = spec.get("lambda");
    const auto max_iter = static_cast<std::size_t>(spec.get("max_iter"));
    const double tol = spec.get("tol");
    const std::size_t n = x.rows, d = x.cols;

    LogisticParams p;
    p.feature_mean.assign(d, 0.0);
    p.feature_scale.assign(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
        var /= static_cast<double>(n);
        p.feature_mean[j] = mean;
        p.feature_scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    RowMatrix xs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            xs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (x(i, j) - p.feature_mean[j]) / p.feature_scale[j];
        }
    }

    const auto K = static_cast<Eigen::Index>(kNumClasses);
    RowMatrix w = RowMatrix::Zero(static_cast<Eigen::Index>(d), K);
    Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(K);
    Objective cur = evaluate_softmax(xs, y, w, b, lambda, true);
    double step = 1.0;
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        if (inf_norm(cur) < tol) {
            p.converged = true;
            break;
        }
        const double g2 = cur.grad_w.squaredNorm() + cur.grad_b.squaredNorm();
        // Armijo backtracking from a Barzilai-Borwein trial step.
        RowMatrix w_new;
        Eigen::RowVectorXd b_new;
        Objective trial;
        bool accepted = false;
        for (int halvings = 0; halvings < 60; ++halvings) {
            w_new = w - step * cur.grad_w;
            b_new = b - step * cur.grad_b;
            trial = evaluate_softmax(xs, y, w_new, b_new, lambda, false);
            if (std::isfinite(trial.value) && trial.value <= cur.value - 1e-4 * step * g2) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // no further descent at machine precision
        Objective next = evaluate_softmax(xs, y, w_new, b_new, lambda, true);
        const double sy = ((w_new - w).array() * (next.grad_w - cur.grad_w).array()).sum() +
                          ((b_new - b).array() * (next.grad_b - cur.grad_b).array()).sum();
        const double ss = (w_new - w).squaredNorm() + (b_new - b).squaredNorm();
        step = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 1e10) : std::min(step * 2.0, 1e10);
        w = std::move(w_new);
        b = std::move(b_new);
        cur = std::move(next);
    }
    if (!p.converged && inf_norm(cur) < tol) p.converged = true;
    p.iterations = it;
    p.weights = Matrix(d, kNumClasses);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            p.weights(j, k) = w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
        }
    }
    p.intercept.assign(b.data(), b.data() + K);
    return p;
}

Matrix logistic_proba(const LogisticParams& p, const Matrix& rows) {
    Matrix z(rows.rows, kNumClasses);
    std::vector<double> xs(rows.cols);
    for (std::size_t i = 0; i < rows.rows; ++i) {
        for (std::size_t j = 0; j < rows.cols; ++j) xs[j] = (rows(i, j) - p.feature_mean[j]) / p.feature_scale[j];
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            double acc = p.intercept[k];
            for (std::size_t j = 0; j < rows.cols; ++j) acc += xs[j] * p.weights(j, k);
            z(i, k) = acc;
        }
    }
    softmax_rows(z);
    return z;
}

// ---------------------------------------------------------------------------
// Trees and ensembles

TreeParams tree_params(const ClassifierSpec& spec) {
    TreeParams tp;
    tp.max_depth = static_cast<int>(spec.get("max_depth"));
    if (spec.params.contains("min_samples_split") || info(spec.kind).defaults.contains("min_samples_split")) {
        tp.min_samples_split = static_cast<std::size_t>(spec.get("min_samples_split"));
    }
    return tp;
}

int tree_vote(const Tree& t, std::span<const double> x) {
    const auto& v = t.leaf_for(x).value;
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

ForestParams fit_forest(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y) {
    const auto n_trees = static_cast<std::size_t>(spec.get("n_estimators"));
    const bool bootstrap = spec.get("bootstrap") != 0.0;
    TreeParams tp = tree_params(spec);
    if (spec.get("feature_subsampling") != 0.0) {
        tp.max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(x.cols)))));
    }
    const SortedColumns sorted(x);
    ForestParams fp;
    fp.trees.reserve(n_trees);
    std::vector<double> w(x.rows);
    for (std::size_t t = 0; t < n_trees; ++t) {
        Rng rng(derive_seed(spec.seed, "random_forest.tree", t));
        if (bootstrap) {
            std::fill(w.begin(), w.end(), 0.0);
            for (std::size_t i = 0; i < x.rows; ++i) w[rng.below(x.rows)] += 1.0;
        } else {
            std::fill(w.begin(), w.end(), 1.0);
        }
        fp.trees.push_back(fit_classification_tree(x, sorted, y, w, tp, &rng));
    }
    return fp;
}

double mean_cross_entropy(const Matrix& f, std::span<const int> y) {
    double ce = 0.0;
    for (std::size_t i = 0; i < f.rows; ++i) {
        const auto r = f.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double sum = 0.0;
        for (double v : r) sum += std::exp(v - mx);
        ce -= r[static_cast<std::size_t>(y[i])] - mx - std::log(sum);
    }
    return ce / static_cast<double>(f.rows);
}

BoostingParams fit_boosting(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y) {
    const auto n_stages = static_cast<std::size_t>(spec.get("n_estimators"));
    BoostingParams bp;
    bp.learning_rate = spec.get("learning_rate");
    TreeParams tp;
    tp.max_depth = static_cast<int>(spec.get("max_depth"));

    const auto prior = class_frequencies(y);
    for (std::size_t k = 0; k < kNumClasses; ++k) bp.init[k] = std::log(std::max(prior[k], 1e-12));

    const std::size_t n = x.rows;
    Matrix f(n, kNumClasses);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < kNumClasses; ++k) f(i, k) = bp.init[k];
    }
    bp.training_loss.push_back(mean_cross_entropy(f, y));

    const SortedColumns sorted(x);
    const std::vector<double> ones(n, 1.0);
    std::vector<double> residual(n);
    constexpr double kScale = (kNumClasses - 1.0) / kNumClasses;
    bp.stages.reserve(n_stages);
    for (std::size_t s = 0; s < n_stages; ++s) {
        Matrix p = f;
        softmax_rows(p);
        std::array<Tree, kNumClasses> stage;
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            for (std::size_t i = 0; i < n; ++i) residual[i] = (y[i] == static_cast<int>(k) ? 1.0 : 0.0) - p(i, k);
            // Newton step for the multinomial deviance.
            const LeafValueFn leaf = [&](std::span<const std::uint32_t> rows) {
                double num = 0.0, den = 0.0;
                for (auto r : rows) {
                    num += residual[r];
                    den += std::abs(residual[r]) * (1.0 - std::abs(residual[r]));
                }
                return den < 1e-150 ? 0.0 : kScale * num / den;
            };
            stage[k] = fit_regression_tree(x, sorted, residual, ones, tp, leaf);
        }
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            for (std::size_t i = 0; i < n; ++i) f(i, k) += bp.learning_rate * stage[k].leaf_for(x.row(i)).value[0];
        }
        bp.stages.push_back(std::move(stage));
        bp.training_loss.push_back(mean_cross_entropy(f, y));
    }
    return bp;
}

Matrix boosting_proba(const BoostingParams& bp, const Matrix& rows) {
    Matrix f(rows.rows, kNumClasses);
    for (std::size_t i = 0; i < rows.rows; ++i) {
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            double acc = bp.init[k];
            for (const auto& stage : bp.stages) acc += bp.learning_rate * stage[k].leaf_for(rows.row(i)).value[0];
            f(i, k) = acc;
        }
    }
    softmax_rows(f);
    return f;
}

AdaBoostParams fit_adaboost(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y) {
    const auto rounds = static_cast<std::size_t>(spec.get("n_estimators"));
    const double lr = spec.get("learning_rate");
    TreeParams tp;
    tp.max_depth = static_cast<int>(spec.get("max_depth"));
    constexpr double K = kNumClasses;

    const std::size_t n = x.rows;
    const SortedColumns sorted(x);
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    AdaBoostParams ap;
    ap.prior = class_frequencies(y);
    std::vector<std::uint8_t> miss(n);
    for (std::size_t m = 0; m < rounds; ++m) {
        Tree tree = fit_classification_tree(x, sorted, y, w, tp);
        double err = 0.0, total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            miss[i] = tree_vote(tree, x.row(i)) != y[i] ? 1 : 0;
            err += miss[i] * w[i];
            total += w[i];
        }
        err /= total;
        ap.weighted_errors.push_back(err);
        // SAMME requires the weak learner to beat random guessing.
        if (err >= 1.0 - 1.0 / K) break;
        const double clipped = std::max(err, 1e-10);
        const double alpha = lr * (std::log((1.0 - clipped) / clipped) + std::log(K - 1.0));
        ap.learners.push_back(std::move(tree));
        ap.alphas.push_back(alpha);
        if (err <= 0.0) break;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (miss[i]) w[i] *= std::exp(alpha);
            sum += w[i];
        }
        for (auto& wi : w) wi /= sum;
    }
    return ap;
}

Matrix adaboost_proba(const AdaBoostParams& ap, const Matrix& rows) {
    Matrix out(rows.rows, kNumClasses);
    if (ap.learners.empty()) {
        for (std::size_t i = 0; i < rows.rows; ++i) {
            for (std::size_t k = 0; k < kNumClasses; ++k) out(i, k) = ap.prior[k];
        }
        return out;
    }
    const double alpha_sum = std::accumulate(ap.alphas.begin(), ap.alphas.end(), 0.0);
    for (std::size_t i = 0; i < rows.rows; ++i) {
        for (std::size_t m = 0; m < ap.learners.size(); ++m) {
            out(i, static_cast<std::size_t>(tree_vote(ap.learners[m], rows.row(i)))) += ap.alphas[m];
        }
        for (std::size_t k = 0; k < kNumClasses; ++k) out(i, k) = out(i, k) / alpha_sum / (kNumClasses - 1.0);
    }
    softmax_rows(out);
    return out;
}

// ---------------------------------------------------------------------------
// Naive Bayes and kNN

NaiveBayesParams fit_naive_bayes(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y) {
    const std::size_t n = x.rows, d = x.cols;
    NaiveBayesParams nb;
    nb.means = Matrix(kNumClasses, d);
    nb.variances = Matrix(kNumClasses, d);
    std::array<std::size_t, kNumClasses> counts{};
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(y[i]);
        ++counts[k];
        for (std::size_t j = 0; j < d; ++j) nb.means(k, j) += x(i, j);
    }
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        for (std::size_t j = 0; j < d; ++j) {
            if (counts[k]) nb.means(k, j) /= static_cast<double>(counts[k]);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(y[i]);
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = x(i, j) - nb.means(k, j);
            nb.variances(k, j) += diff * diff;
        }
    }
    // Floor: var_smoothing times the largest per-feature variance of the whole set.
    double max_var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
        max_var = std::max(max_var, var / static_cast<double>(n));
    }
    double floor = spec.get("var_smoothing") * max_var;
    if (!(floor > 0.0)) floor = spec.get("var_smoothing") > 0.0 ? spec.get("var_smoothing") : 1e-300;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        nb.log_prior[k] = counts[k] ? std::log(static_cast<double>(counts[k]) / static_cast<double>(n))
                                    : -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < d; ++j) {
            if (counts[k]) nb.variances(k, j) /= static_cast<double>(counts[k]);
            nb.variances(k, j) += floor;
        }
    }
    return nb;
}

Matrix naive_bayes_proba(const NaiveBayesParams& nb, const Matrix& rows) {
    constexpr double kLog2Pi = 1.8378770664093454836;
    Matrix z(rows.rows, kNumClasses);
    for (std::size_t i = 0; i < rows.rows; ++i) {
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            if (!std::isfinite(nb.log_prior[k])) {
                z(i, k) = -std::numeric_limits<double>::infinity();
                continue;
            }
            double ll = nb.log_prior[k];
            for (std::size_t j = 0; j < rows.cols; ++j) {
                const double var = nb.variances(k, j);
                const double diff = rows(i, j) - nb.means(k, j);
                ll -= 0.5 * (kLog2Pi + std::log(var) + diff * diff / var);
            }
            z(i, k) = ll;
        }
    }
    softmax_rows(z);
    return z;
}

Matrix knn_proba(const KnnParams& kp, const Matrix& rows) {
    const std::size_t n_train = kp.x.rows;
    const std::size_t k = std::min(kp.k, n_train);
    const auto train_x = as_eigen(kp.x);
    Matrix out(rows.rows, kNumClasses);
    std::vector<std::pair<double, std::uint32_t>> dist(n_train);
    for (std::size_t i = 0; i < rows.rows; ++i) {
        const Eigen::Map<const Eigen::RowVectorXd> q(rows.row(i).data(), static_cast<Eigen::Index>(rows.cols));
        const Eigen::VectorXd d2 = (train_x.rowwise() - q).rowwise().squaredNorm();
        for (std::size_t j = 0; j < n_train; ++j) dist[j] = {d2(static_cast<Eigen::Index>(j)), static_cast<std::uint32_t>(j)};
        // Distance ties resolve to the lower training index.
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
        for (std::size_t j = 0; j < k; ++j) out(i, static_cast<std::size_t>(kp.y[dist[j].second])) += 1.0;
        for (std::size_t c = 0; c < kNumClasses; ++c) out(i, c) /= static_cast<double>(k);
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(ClassifierKind kind) { return info(kind).key; }
std::string_view display_name(ClassifierKind kind) { return info(kind).display; }

std::optional<ClassifierKind> parse_classifier_kind(std::string_view text) {
    const std::string key = lowercase(trim(text));
    for (const auto& k : kind_table()) {
        if (k.key == key) return k.kind;
    }
    if (key == "logreg" || key == "lr") return ClassifierKind::LogisticRegression;
    if (key == "adaboost") return ClassifierKind::AdaBoost;
    if (key == "knn") return ClassifierKind::KNearestNeighbor;
    if (key == "gbm") return ClassifierKind::GradientBoosting;
    if (key == "rf") return ClassifierKind::RandomForest;
    return std::nullopt;
}

double ClassifierSpec::get(const std::string& name) const {
    if (auto it = params.find(name); it != params.end()) return it->second;
    const auto& defaults = info(kind).defaults;
    if (auto it = defaults.find(name); it != defaults.end()) return it->second;
    throw Error("classifier " + std::string(to_string(kind)) + " has no hyperparameter '" + name + "'");
}

std::string ClassifierSpec::id() const {
    std::string out(to_string(kind));
    out += "[";
    bool first = true;
    for (const auto& [name, value] : params) {
        if (!first) out += ",";
        out += name + "=" + format_number(value);
        first = false;
    }
    out += "]";
    return out;
}

void validate(const ClassifierSpec& spec) {
    const auto& defaults = info(spec.kind).defaults;
    for (const auto& [name, value] : spec.params) {
        if (!defaults.contains(name)) {
            throw Error("classifier " + std::string(to_string(spec.kind)) + ": unknown hyperparameter '" + name + "'");
        }
        if (!std::isfinite(value)) throw Error("classifier " + spec.id() + ": non-finite '" + name + "'");
    }
    const auto require = [&](bool ok, const std::string& what) {
        if (!ok) throw Error("classifier " + spec.id() + ": " + what);
    };
    switch (spec.kind) {
        case ClassifierKind::LogisticRegression:
            require(spec.get("lambda") >= 0.0, "lambda must be >= 0");
            require(is_integer(spec.get("max_iter")) && spec.get("max_iter") >= 1, "max_iter must be an integer >= 1");
            require(spec.get("tol") > 0.0, "tol must be > 0");
            break;
        case ClassifierKind::KNearestNeighbor:
            require(is_integer(spec.get("k")) && spec.get("k") >= 1, "k must be an integer >= 1");
            break;
        case ClassifierKind::DecisionTree:
        case ClassifierKind::RandomForest:
            require(is_integer(spec.get("max_depth")) && spec.get("max_depth") >= 0,
                    "max_depth must be an integer >= 1, or 0 for unlimited");
            require(is_integer(spec.get("min_samples_split")) && spec.get("min_samples_split") >= 2,
                    "min_samples_split must be an integer >= 2");
            if (spec.kind == ClassifierKind::RandomForest) {
                require(is_integer(spec.get("n_estimators")) && spec.get("n_estimators") >= 1, "n_estimators must be >= 1");
            }
            break;
        case ClassifierKind::GradientBoosting:
            require(is_integer(spec.get("n_estimators")) && spec.get("n_estimators") >= 1, "n_estimators must be >= 1");
            require(spec.get("learning_rate") > 0.0, "learning_rate must be > 0");
            require(is_integer(spec.get("max_depth")) && spec.get("max_depth") >= 1, "max_depth must be >= 1");
            break;
        case ClassifierKind::AdaBoost:
            require(is_integer(spec.get("n_estimators")) && spec.get("n_estimators") >= 1, "n_estimators must be >= 1");
            require(spec.get("learning_rate") > 0.0, "learning_rate must be > 0");
            require(is_integer(spec.get("max_depth")) && spec.get("max_depth") >= 1 && spec.get("max_depth") <= 3,
                    "max_depth must be 1, 2 or 3");
            break;
        case ClassifierKind::NaiveBayes:
            require(spec.get("var_smoothing") >= 0.0, "var_smoothing must be >= 0");
            break;
    }
}

std::vector<ClassifierSpec> default_grid(ClassifierKind kind, std::uint64_t seed) {
    std::vector<ClassifierSpec> grid;
    const auto add = [&](std::map<std::string, double> p) { grid.push_back({kind, std::move(p), seed}); };
    switch (kind) {
        case ClassifierKind::LogisticRegression:
            for (double l : {0.0, 1e-3, 1e-2, 1e-1}) add({{"lambda", l}});
            break;
        case ClassifierKind::KNearestNeighbor:
            for (double k : {1, 3, 5, 11, 21}) add({{"k", k}});
            break;
        case ClassifierKind::DecisionTree:
            for (double depth : {2, 4, 8, 0}) add({{"max_depth", depth}});
            break;
        case ClassifierKind::RandomForest:
        case ClassifierKind::AdaBoost:
            for (double n : {50, 100, 200}) add({{"n_estimators", n}});
            break;
        case ClassifierKind::GradientBoosting:
            for (double n : {50, 100, 200}) {
                for (double lr : {0.05, 0.1}) add({{"n_estimators", n}, {"learning_rate", lr}});
            }
            break;
        case ClassifierKind::NaiveBayes:
            add({});
            break;
    }
    return grid;
}

TrainedModel::TrainedModel(ClassifierSpec spec, std::size_t dim, ModelParams params)
    : spec_(std::move(spec)), dim_(dim), params_(std::move(params)) {}

Matrix TrainedModel::predict_proba(const Matrix& rows) const {
    if (rows.cols != dim_) {
        throw Error("predict_proba: expected " + std::to_string(dim_) + " features, got " + std::to_string(rows.cols));
    }
    struct Visitor {
        const Matrix& rows;
        Matrix operator()(const LogisticParams& p) const { return logistic_proba(p, rows); }
        Matrix operator()(const TreeParamsModel& p) const {
            Matrix out(rows.rows, kNumClasses);
            for (std::size_t i = 0; i < rows.rows; ++i) {
                const auto& v = p.tree.leaf_for(rows.row(i)).value;
                std::copy(v.begin(), v.end(), out.row(i).begin());
            }
            return out;
        }
        Matrix operator()(const ForestParams& p) const {
            Matrix out(rows.rows, kNumClasses);
            for (std::size_t i = 0; i < rows.rows; ++i) {
                for (const auto& t : p.trees) {
                    const auto& v = t.leaf_for(rows.row(i)).value;
                    for (std::size_t k = 0; k < kNumClasses; ++k) out(i, k) += v[k];
                }
                for (std::size_t k = 0; k < kNumClasses; ++k) out(i, k) /= static_cast<double>(p.trees.size());
            }
            return out;
        }
        Matrix operator()(const BoostingParams& p) const { return boosting_proba(p, rows); }
        Matrix operator()(const AdaBoostParams& p) const { return adaboost_proba(p, rows); }
        Matrix operator()(const NaiveBayesParams& p) const { return naive_bayes_proba(p, rows); }
        Matrix operator()(const KnnParams& p) const { return knn_proba(p, rows); }
    };
    return std::visit(Visitor{rows}, params_);
}

std::vector<int> argmax_rows(const Matrix& proba) {
    std::vector<int> out(proba.rows);
    for (std::size_t i = 0; i < proba.rows; ++i) {
        const auto r = proba.row(i);
        out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
}

std::vector<int> TrainedModel::predict(const Matrix& rows) const { return argmax_rows(predict_proba(rows)); }

Matrix predict_proba(const TrainedModel& model, const Matrix& rows) { return model.predict_proba(rows); }

TrainedModel train(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y) {
    validate(spec);
    check_inputs(x, y);
    switch (spec.kind) {
        case ClassifierKind::LogisticRegression:
            return {spec, x.cols, fit_logistic(spec, x, y)};
        case ClassifierKind::DecisionTree: {
            const SortedColumns sorted(x);
            const std::vector<double> w(x.rows, 1.0);
            return {spec, x.cols, TreeParamsModel{fit_classification_tree(x, sorted, y, w, tree_params(spec))}};
        }
        case ClassifierKind::RandomForest:
            return {spec, x.cols, fit_forest(spec, x, y)};
        case ClassifierKind::GradientBoosting:
            return {spec, x.cols, fit_boosting(spec, x, y)};
        case ClassifierKind::AdaBoost:
            return {spec, x.cols, fit_adaboost(spec, x, y)};
        case ClassifierKind::NaiveBayes:
            return {spec, x.cols, fit_naive_bayes(spec, x, y)};
        case ClassifierKind::KNearestNeighbor:
            return {spec, x.cols, KnnParams{x, std::vector<int>(y.begin(), y.end()),
                                            static_cast<std::size_t>(spec.get("k"))}};
    }
    throw Error("train: unknown classifier kind");
}

TrainedModel train(const ClassifierSpec& spec, const DesignMatrix& train_set) {
    const auto y = train_set.class_indices();
    return train(spec, train_set.features(), y);
}

bool grows_in_stages(ClassifierKind kind) {
    return kind == ClassifierKind::RandomForest || kind == ClassifierKind::GradientBoosting ||
           kind == ClassifierKind::AdaBoost;
}

TrainedModel truncate_estimators(const TrainedModel& model, std::size_t n) {
    if (!grows_in_stages(model.spec().kind)) throw Error("truncate_estimators: not a staged ensemble");
    const auto have = static_cast<std::size_t>(model.spec().get("n_estimators"));
    if (n < 1 || n > have) throw Error("truncate_estimators: cannot cut " + std::to_string(have) + " estimators to " +
                                       std::to_string(n));
    ClassifierSpec spec = model.spec();
    spec.params["n_estimators"] = static_cast<double>(n);
    ModelParams params = model.params();
    if (auto* f = std::get_if<ForestParams>(&params)) {
        f->trees.resize(n);
    } else if (auto* b = std::get_if<BoostingParams>(&params)) {
        b->stages.resize(n);
        b->training_loss.resize(n + 1);
    } else if (auto* a = std::get_if<AdaBoostParams>(&params)) {
        // Early stopping happens at the same round whatever the budget.
        a->learners.resize(std::min(n, a->learners.size()));
        a->alphas.resize(a->learners.size());
        a->weighted_errors.resize(std::min(n, a->weighted_errors.size()));
    }
    return {spec, model.dim(), std::move(params)};
}

SoftmaxObjective softmax_objective(const Matrix& x, std::span<const int> y, const Matrix& w,
                                   std::span<const double> b, double lambda) {
    if (w.rows != x.cols || w.cols != kNumClasses || b.size() != kNumClasses || y.size() != x.rows) {
        throw Error("softmax_objective: shape mismatch");
    }
    const RowMatrix we = as_eigen(w);
    const Eigen::RowVectorXd be = Eigen::Map<const Eigen::RowVectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    const Objective o = evaluate_softmax(as_eigen(x), y, we, be, lambda, true);
    SoftmaxObjective out;
    out.value = o.value;
    out.grad_w = Matrix(w.rows, w.cols);
    for (std::size_t j = 0; j < w.rows; ++j) {
        for (std::size_t k = 0; k < w.cols; ++k) out.grad_w(j, k) = o.grad_w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
    }
    out.grad_b.assign(o.grad_b.data(), o.grad_b.data() + o.grad_b.size());
    return out;
}

}  // namespace dermbench
