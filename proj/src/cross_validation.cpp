#include "dermbench/learners.hpp"
#include "dermbench/parallel.hpp"

#include <algorithm>

namespace dermbench {

std::vector<int> assign_folds(std::span<const int> y, const CvPlan& plan) {
    if (plan.n_folds < 2) throw Error("cross-validation: need at least 2 folds");
    if (y.size() < plan.n_folds) throw Error("cross-validation: fewer rows than folds");
    std::vector<int> folds(y.size(), -1);
    Rng rng(derive_seed(plan.seed, "cv.folds"));
    if (!plan.stratified) {
        std::vector<std::size_t> order(y.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        for (std::size_t p = 0; p < order.size(); ++p) folds[order[p]] = static_cast<int>(p % plan.n_folds);
        return folds;
    }
    std::size_t deal = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] == static_cast<int>(k)) members.push_back(i);
        }
        rng.shuffle(members);
        for (std::size_t i : members) folds[i] = static_cast<int>(deal++ % plan.n_folds);
    }
    for (int f : folds) {
        if (f < 0) throw Error("cross-validation: label out of range");
    }
    return folds;
}

CvResult cross_validate(std::span<const ClassifierSpec> grid, const Matrix& x, std::span<const int> y,
                        const CvPlan& plan) {
    if (grid.empty()) throw Error("cross-validation: empty grid");
    for (const auto& spec : grid) validate(spec);
    CvResult result;
    result.folds = assign_folds(y, plan);

    if (plan.stratified) {
        std::array<std::size_t, kNumClasses> total{};
        for (int label : y) ++total[static_cast<std::size_t>(label)];
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            if (total[k] > 0 && total[k] < plan.n_folds) {
                throw Error("cross-validation: class " + std::string(to_string(kClassOrder[k])) + " has fewer rows (" +
                            std::to_string(total[k]) + ") than folds; a fold would miss it");
            }
        }
    }

    struct FoldData {
        Matrix x_train, x_valid;
        std::vector<int> y_train, y_valid;
    };
    std::vector<FoldData> fold_data(plan.n_folds);
    for (std::size_t f = 0; f < plan.n_folds; ++f) {
        auto& fd = fold_data[f];
        std::vector<std::size_t> tr, va;
        for (std::size_t i = 0; i < y.size(); ++i) (result.folds[i] == static_cast<int>(f) ? va : tr).push_back(i);
        const auto gather = [&](const std::vector<std::size_t>& idx, Matrix& out, std::vector<int>& labels) {
            out = Matrix(idx.size(), x.cols);
            for (std::size_t r = 0; r < idx.size(); ++r) {
                std::copy_n(x.row(idx[r]).begin(), x.cols, out.row(r).begin());
                labels.push_back(y[idx[r]]);
            }
        };
        gather(tr, fd.x_train, fd.y_train);
        gather(va, fd.x_valid, fd.y_valid);
    }

    // Staged ensembles that differ only in n_estimators share one fit per fold:
    // the smaller models are exact prefixes of the largest.
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        bool placed = false;
        if (grows_in_stages(grid[g].kind)) {
            auto key = grid[g];
            key.params.erase("n_estimators");
            for (auto& group : groups) {
                auto other = grid[group.front()];
                other.params.erase("n_estimators");
                if (other == key) {
                    group.push_back(g);
                    placed = true;
                    break;
                }
            }
        }
        if (!placed) groups.push_back({g});
    }

    const std::size_t n_folds = plan.n_folds;
    result.fold_accuracy.assign(grid.size(), std::vector<double>(n_folds, 0.0));
    parallel_for(groups.size() * n_folds, [&](std::size_t job) {
        const auto& group = groups[job / n_folds];
        const std::size_t f = job % n_folds;
        const auto& fd = fold_data[f];
        const auto score = [&](const TrainedModel& model) {
            const auto pred = model.predict(fd.x_valid);
            std::size_t correct = 0;
            for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == fd.y_valid[i] ? 1 : 0;
            return static_cast<double>(correct) / static_cast<double>(pred.size());
        };
        if (group.size() == 1) {
            result.fold_accuracy[group[0]][f] = score(train(grid[group[0]], fd.x_train, fd.y_train));
            return;
        }
        const auto largest = *std::max_element(group.begin(), group.end(), [&](std::size_t a, std::size_t b) {
            return grid[a].get("n_estimators") < grid[b].get("n_estimators");
        });
        const TrainedModel full = train(grid[largest], fd.x_train, fd.y_train);
        for (std::size_t g : group) {
            const auto n = static_cast<std::size_t>(grid[g].get("n_estimators"));
            result.fold_accuracy[g][f] = score(g == largest ? full : truncate_estimators(full, n));
        }
    });

    result.mean_accuracy.resize(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double sum = 0.0;
        for (double a : result.fold_accuracy[g]) sum += a;
        result.mean_accuracy[g] = sum / static_cast<double>(n_folds);
        if (result.mean_accuracy[g] > result.mean_accuracy[result.best_index]) result.best_index = g;
    }
    result.best = grid[result.best_index];
    return result;
}

CvResult cross_validate(std::span<const ClassifierSpec> grid, const DesignMatrix& train_set, const CvPlan& plan) {
    const auto y = train_set.class_indices();
    return cross_validate(grid, train_set.features(), y, plan);
}

}  // namespace dermbench
