#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "dermbench/fixture.hpp"
#include "dermbench/learners.hpp"
#include "support.hpp"

using namespace dermbench;

namespace {

ClassifierSpec spec_of(ClassifierKind kind, std::map<std::string, double> params = {}, std::uint64_t seed = 1) {
    return {kind, std::move(params), seed};
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& y) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < y.size(); ++i) ok += pred[i] == y[i] ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(y.size());
}

// Small, quick settings for every kind.
std::vector<ClassifierSpec> quick_specs() {
    return {spec_of(ClassifierKind::LogisticRegression, {{"lambda", 1e-2}}),
            spec_of(ClassifierKind::AdaBoost, {{"n_estimators", 10}, {"max_depth", 2}}),
            spec_of(ClassifierKind::DecisionTree, {{"max_depth", 4}}),
            spec_of(ClassifierKind::GradientBoosting, {{"n_estimators", 10}, {"max_depth", 2}}),
            spec_of(ClassifierKind::RandomForest, {{"n_estimators", 8}}),
            spec_of(ClassifierKind::KNearestNeighbor, {{"k", 3}}),
            spec_of(ClassifierKind::NaiveBayes)};
}

// Best single-feature threshold split by exhaustive search, scored by
// weighted Gini of the two children.
struct Stump {
    std::size_t feature = 0;
    double threshold = 0.0;
    double impurity = 1e300;
};

Stump brute_force_stump(const Matrix& x, const std::vector<int>& y) {
    Stump best;
    for (std::size_t f = 0; f < x.cols; ++f) {
        std::vector<double> values;
        for (std::size_t i = 0; i < x.rows; ++i) values.push_back(x(i, f));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t v = 0; v + 1 < values.size(); ++v) {
            const double t = (values[v] + values[v + 1]) / 2.0;
            std::array<double, 3> l{}, r{};
            for (std::size_t i = 0; i < x.rows; ++i) (x(i, f) <= t ? l : r)[static_cast<std::size_t>(y[i])] += 1.0;
            const auto gini = [](const std::array<double, 3>& c) {
                const double n = c[0] + c[1] + c[2];
                if (n == 0.0) return 0.0;
                double s = 1.0;
                for (double v : c) s -= (v / n) * (v / n);
                return s * n;
            };
            const double imp = gini(l) + gini(r);
            if (imp < best.impurity - 1e-12) best = {f, t, imp};
        }
    }
    return best;
}

}  // namespace

TEST_SUITE("learners") {
    TEST_CASE("spec parsing, validation and ids") {
        CHECK(parse_classifier_kind("knn") == ClassifierKind::KNearestNeighbor);
        CHECK(parse_classifier_kind("Logistic_Regression") == ClassifierKind::LogisticRegression);
        CHECK_FALSE(parse_classifier_kind("svm").has_value());
        CHECK_THROWS_AS(validate(spec_of(ClassifierKind::KNearestNeighbor, {{"k", 0}})), Error);
        CHECK_THROWS_AS(validate(spec_of(ClassifierKind::LogisticRegression, {{"lambda", -1}})), Error);
        CHECK_THROWS_AS(validate(spec_of(ClassifierKind::GradientBoosting, {{"learning_rate", 0}})), Error);
        CHECK_THROWS_AS(validate(spec_of(ClassifierKind::RandomForest, {{"n_estimators", 0}})), Error);
        CHECK_THROWS_AS(validate(spec_of(ClassifierKind::AdaBoost, {{"max_depth", 4}})), Error);
        CHECK_THROWS_AS(validate(spec_of(ClassifierKind::NaiveBayes, {{"k", 3}})), Error);
        CHECK(spec_of(ClassifierKind::KNearestNeighbor, {{"k", 3}}).id() == "k_nearest_neighbor[k=3]");

        CHECK(default_grid(ClassifierKind::LogisticRegression, 0).size() == 4);
        CHECK(default_grid(ClassifierKind::KNearestNeighbor, 0).size() == 5);
        CHECK(default_grid(ClassifierKind::DecisionTree, 0).size() == 4);
        CHECK(default_grid(ClassifierKind::RandomForest, 0).size() == 3);
        CHECK(default_grid(ClassifierKind::AdaBoost, 0).size() == 3);
        CHECK(default_grid(ClassifierKind::GradientBoosting, 0).size() == 6);
        CHECK(default_grid(ClassifierKind::NaiveBayes, 0).size() == 1);
        for (auto kind : kAllClassifiers) {
            for (const auto& s : default_grid(kind, 0)) CHECK_NOTHROW(validate(s));
        }
    }

    TEST_CASE("1-nearest neighbour recalls its own training rows") {
        const auto b = testing::make_blobs({20, 20, 20}, 5, 1.0, 4);
        const auto model = train(spec_of(ClassifierKind::KNearestNeighbor, {{"k", 1}}), b.x, b.y);
        CHECK(accuracy(model.predict(b.x), b.y) == 1.0);
    }

    TEST_CASE("logistic regression fits a linearly separable set") {
        const auto b = testing::make_blobs({40, 40, 40}, 3, 6.0, 8, 0.7);
        // Certify separability independently before asking for perfect accuracy.
        REQUIRE(testing::perceptron_errors(b.x, b.y, 3, 1000) == 0);
        const auto model = train(spec_of(ClassifierKind::LogisticRegression, {{"lambda", 0.0}}), b.x, b.y);
        CHECK(accuracy(model.predict(b.x), b.y) == 1.0);
    }

    TEST_CASE("depth-1 tree picks the separating feature found by brute force") {
        Rng rng(12);
        Matrix x(90, 4);
        std::vector<int> y;
        for (std::size_t i = 0; i < 90; ++i) {
            const int label = static_cast<int>(i % 3);
            y.push_back(label);
            for (std::size_t j = 0; j < 4; ++j) x(i, j) = rng.normal();
            x(i, 2) = label == 0 ? -5.0 - rng.uniform() : 5.0 + rng.uniform();  // class 0 vs the rest
        }
        const auto oracle = brute_force_stump(x, y);
        CHECK(oracle.feature == 2);
        const auto model = train(spec_of(ClassifierKind::DecisionTree, {{"max_depth", 1}}), x, y);
        const auto& tree = std::get<TreeParamsModel>(model.params()).tree;
        CHECK(tree.nodes[0].feature == static_cast<int>(oracle.feature));
        CHECK(tree.nodes[0].threshold == doctest::Approx(oracle.threshold));
        CHECK(accuracy(model.predict(x), y) >= 2.0 / 3.0);
    }

    TEST_CASE("tree splits agree with the brute-force stump on random data") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto b = testing::make_blobs({15, 12, 9}, 3, 1.0, seed);
            const auto oracle = brute_force_stump(b.x, b.y);
            const auto model = train(spec_of(ClassifierKind::DecisionTree, {{"max_depth", 1}}), b.x, b.y);
            const auto& root = std::get<TreeParamsModel>(model.params()).tree.nodes[0];
            CHECK(root.feature == static_cast<int>(oracle.feature));
            CHECK(root.threshold == doctest::Approx(oracle.threshold));
        }
    }

    TEST_CASE("probability rows sum to one and agree with predict") {
        const auto b = testing::make_blobs({25, 30, 35}, 6, 1.5, 21);
        const auto probe = testing::make_blobs({10, 10, 10}, 6, 1.5, 22);
        for (const auto& spec : quick_specs()) {
            CAPTURE(spec.id());
            const auto model = train(spec, b.x, b.y);
            const auto p = model.predict_proba(probe.x);
            const auto pred = model.predict(probe.x);
            REQUIRE(p.rows == probe.x.rows);
            REQUIRE(p.cols == 3);
            for (std::size_t i = 0; i < p.rows; ++i) {
                double s = 0.0;
                for (std::size_t k = 0; k < 3; ++k) {
                    CHECK(p(i, k) >= 0.0);
                    s += p(i, k);
                }
                CHECK(std::abs(s - 1.0) <= 1e-9);
                const auto r = p.row(i);
                CHECK(pred[i] == static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()));
            }
            CHECK(train(spec, b.x, b.y) == model);  // deterministic given spec, seed and data
            CHECK_THROWS_AS(model.predict_proba(Matrix(2, 5)), Error);
        }
    }

    TEST_CASE("symmetric models give uniform probabilities") {
        NaiveBayesParams nb;
        nb.log_prior = {std::log(1.0 / 3), std::log(1.0 / 3), std::log(1.0 / 3)};
        nb.means = Matrix(3, 2, 0.5);
        nb.variances = Matrix(3, 2, 2.0);
        const TrainedModel bayes(spec_of(ClassifierKind::NaiveBayes), 2, nb);
        const auto probe = testing::make_blobs({4, 4, 4}, 2, 1.0, 3);
        const auto p = bayes.predict_proba(probe.x);
        for (double v : p.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

        LogisticParams lp;
        lp.feature_mean = {0, 0};
        lp.feature_scale = {1, 1};
        lp.weights = Matrix(2, 3);
        lp.intercept = {0, 0, 0};
        const TrainedModel logistic(spec_of(ClassifierKind::LogisticRegression), 2, lp);
        for (double v : logistic.predict_proba(probe.x).data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }

    TEST_CASE("softmax gradient matches central finite differences") {
        Rng rng(31);
        const auto b = testing::make_blobs({7, 9, 6}, 4, 1.0, 30);
        for (int point = 0; point < 20; ++point) {
            Matrix w(4, 3);
            for (auto& v : w.data) v = rng.normal();
            std::vector<double> bias{rng.normal(), rng.normal(), rng.normal()};
            const double lambda = point % 2 == 0 ? 0.0 : 0.3;
            const auto obj = softmax_objective(b.x, b.y, w, bias, lambda);

            const double h = 1e-5;
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < w.data.size(); ++i) {
                Matrix wp = w, wm = w;
                wp.data[i] += h;
                wm.data[i] -= h;
                const double fd = (softmax_objective(b.x, b.y, wp, bias, lambda).value -
                                   softmax_objective(b.x, b.y, wm, bias, lambda).value) /
                                  (2 * h);
                num += (fd - obj.grad_w.data[i]) * (fd - obj.grad_w.data[i]);
                den += fd * fd;
            }
            for (std::size_t k = 0; k < 3; ++k) {
                auto bp = bias, bm = bias;
                bp[k] += h;
                bm[k] -= h;
                const double fd = (softmax_objective(b.x, b.y, w, bp, lambda).value -
                                   softmax_objective(b.x, b.y, w, bm, lambda).value) /
                                  (2 * h);
                num += (fd - obj.grad_b[k]) * (fd - obj.grad_b[k]);
                den += fd * fd;
            }
            CHECK(std::sqrt(num / den) < 1e-5);
        }
    }

    TEST_CASE("gradient boosting never increases its training loss") {
        for (double lr : {0.05, 0.1}) {
            const auto b = testing::make_blobs({30, 40, 50}, 5, 1.0, 41);
            const auto model = train(spec_of(ClassifierKind::GradientBoosting, {{"n_estimators", 60}, {"learning_rate", lr}}), b.x, b.y);
            const auto& loss = std::get<BoostingParams>(model.params()).training_loss;
            REQUIRE(loss.size() == 61);
            for (std::size_t s = 1; s < loss.size(); ++s) CHECK(loss[s] <= loss[s - 1] + 1e-12);
            CHECK(loss.back() < loss.front());
        }
    }

    TEST_CASE("a one-tree forest without randomness is the decision tree") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto b = testing::make_blobs({20, 25, 30}, 6, 1.0, 50 + seed);
            const auto probe = testing::make_blobs({15, 15, 15}, 6, 1.0, 60 + seed);
            const auto forest = train(spec_of(ClassifierKind::RandomForest, {{"n_estimators", 1}, {"bootstrap", 0}, {"feature_subsampling", 0}}, seed), b.x, b.y);
            const auto tree = train(spec_of(ClassifierKind::DecisionTree, {}, seed), b.x, b.y);
            CHECK(forest.predict(probe.x) == tree.predict(probe.x));
            CHECK(forest.predict_proba(probe.x).data == tree.predict_proba(probe.x).data);
            CHECK(std::get<ForestParams>(forest.params()).trees[0] == std::get<TreeParamsModel>(tree.params()).tree);
        }
    }

    TEST_CASE("AdaBoost only keeps learners that beat chance") {
        // Constant features: every stump predicts the majority class, which on
        // balanced labels errs on 2/3 of the weight.
        Matrix x(30, 2, 1.0);
        std::vector<int> y;
        for (int i = 0; i < 30; ++i) y.push_back(i % 3);
        const auto model = train(spec_of(ClassifierKind::AdaBoost, {{"n_estimators", 20}}), x, y);
        const auto& ap = std::get<AdaBoostParams>(model.params());
        CHECK(ap.learners.empty());
        REQUIRE(ap.weighted_errors.size() == 1);
        CHECK(ap.weighted_errors[0] >= 2.0 / 3.0 - 1e-12);
        for (double v : model.predict_proba(x).data) CHECK(v == doctest::Approx(1.0 / 3.0));

        const auto b = testing::make_blobs({30, 30, 30}, 4, 1.0, 70);
        const auto fitted = train(spec_of(ClassifierKind::AdaBoost, {{"n_estimators", 40}}), b.x, b.y);
        const auto& fp = std::get<AdaBoostParams>(fitted.params());
        CHECK_FALSE(fp.learners.empty());
        for (std::size_t m = 0; m < fp.learners.size(); ++m) CHECK(fp.weighted_errors[m] < 2.0 / 3.0);
        if (fp.weighted_errors.size() > fp.learners.size()) CHECK(fp.weighted_errors.back() >= 2.0 / 3.0);
    }

    TEST_CASE("smaller ensembles are exact prefixes of larger ones") {
        const auto b = testing::make_blobs({20, 25, 30}, 5, 1.0, 80);
        for (auto kind : {ClassifierKind::RandomForest, ClassifierKind::GradientBoosting, ClassifierKind::AdaBoost}) {
            const auto big = train(spec_of(kind, {{"n_estimators", 30}}, 4), b.x, b.y);
            for (double n : {1.0, 7.0, 30.0}) {
                const auto direct = train(spec_of(kind, {{"n_estimators", n}}, 4), b.x, b.y);
                CHECK(truncate_estimators(big, static_cast<std::size_t>(n)) == direct);
            }
            CHECK_THROWS_AS(truncate_estimators(big, 31), Error);
        }
        CHECK_THROWS_AS(truncate_estimators(train(spec_of(ClassifierKind::NaiveBayes), b.x, b.y), 1), Error);
    }

    TEST_CASE("naive Bayes survives zero-variance features") {
        auto b = testing::make_blobs({10, 10, 10}, 3, 3.0, 90);
        for (std::size_t i = 0; i < b.x.rows; ++i) b.x(i, 1) = 2.0;
        const auto model = train(spec_of(ClassifierKind::NaiveBayes), b.x, b.y);
        for (double v : model.predict_proba(b.x).data) CHECK(std::isfinite(v));
        CHECK(accuracy(model.predict(b.x), b.y) > 0.9);
    }

    TEST_CASE("kNN breaks distance ties by row order and vote ties by class") {
        Matrix x(3, 1);
        x(0, 0) = -1.0;
        x(1, 0) = 1.0;
        x(2, 0) = 5.0;
        const std::vector<int> y{2, 1, 0};
        const auto model = train(spec_of(ClassifierKind::KNearestNeighbor, {{"k", 1}}), x, y);
        Matrix probe(1, 1, 0.0);  // equidistant from rows 0 and 1
        CHECK(model.predict(probe)[0] == 2);
        const auto two = train(spec_of(ClassifierKind::KNearestNeighbor, {{"k", 2}}), x, y);
        CHECK(two.predict(probe)[0] == 1);  // one vote each for 2 and 1: lower class wins
    }

    TEST_CASE("models survive a save/load round trip") {
        testing::TempDir dir("models");
        const auto b = testing::make_blobs({15, 15, 15}, 4, 1.5, 100);
        for (const auto& spec : quick_specs()) {
            CAPTURE(spec.id());
            const auto model = train(spec, b.x, b.y);
            const auto path = dir / (std::string(to_string(spec.kind)) + ".modl");
            save_model(model, path);
            const auto back = load_model(path);
            CHECK(back == model);
            CHECK(encode_model(back) == read_file_bytes(path));
            CHECK(back.predict_proba(b.x).data == model.predict_proba(b.x).data);

            auto bytes = encode_model(model);
            auto magic = bytes;
            magic[1] = 'X';
            CHECK_THROWS_AS(decode_model(magic), FormatError);
            Rng rng(spec.seed + static_cast<std::uint64_t>(spec.kind));
            for (int t = 0; t < 40; ++t) {
                auto flipped = bytes;
                flipped[4 + rng.below(bytes.size() - 4)] ^= static_cast<std::uint8_t>(1u << rng.below(8));
                CHECK_THROWS_AS(decode_model(flipped), FormatError);
            }
            bytes.resize(bytes.size() / 2);
            CHECK_THROWS_AS(decode_model(bytes), FormatError);
        }
    }
}

TEST_SUITE("cross_validation") {
    TEST_CASE("stratified folds partition rows with balanced class counts") {
        const auto split = effective_split(classification_slides(make_fixture_manifest(8)));
        std::vector<int> y;
        for (std::size_t i = 0; i < split.records.size(); ++i) {
            if (split.subsets[i] == EffectiveSubset::Train) y.push_back(static_cast<int>(class_index(split.records[i].category)));
        }
        REQUIRE(y.size() == 498);
        const auto folds = assign_folds(y, {5, true, 77});
        CHECK(folds == assign_folds(y, {5, true, 77}));
        std::array<std::array<int, 5>, 3> counts{};
        std::array<int, 5> sizes{};
        for (std::size_t i = 0; i < y.size(); ++i) {
            REQUIRE(folds[i] >= 0);
            REQUIRE(folds[i] < 5);
            ++counts[static_cast<std::size_t>(y[i])][static_cast<std::size_t>(folds[i])];
            ++sizes[static_cast<std::size_t>(folds[i])];
        }
        for (std::size_t k = 0; k < 3; ++k) {
            const auto [lo, hi] = std::minmax_element(counts[k].begin(), counts[k].end());
            CHECK(*hi - *lo <= 1);
        }
        const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
        CHECK(*hi - *lo <= 1);
    }

    TEST_CASE("a single-spec grid returns that spec") {
        const auto b = testing::make_blobs({20, 20, 20}, 3, 2.0, 110);
        const std::vector<ClassifierSpec> grid{spec_of(ClassifierKind::NaiveBayes)};
        const auto r = cross_validate(grid, b.x, b.y, {5, true, 1});
        CHECK(r.best == grid[0]);
        CHECK(r.best_index == 0);
        CHECK(r.fold_accuracy[0].size() == 5);
    }

    TEST_CASE("k=1 beats k=201 on separated clusters") {
        const auto b = testing::make_blobs({60, 60, 60}, 3, 5.0, 120);
        const std::vector<ClassifierSpec> grid{spec_of(ClassifierKind::KNearestNeighbor, {{"k", 1}}),
                                               spec_of(ClassifierKind::KNearestNeighbor, {{"k", 201}})};
        const auto r = cross_validate(grid, b.x, b.y, {5, true, 3});
        CHECK(r.best_index == 0);
        // Direct fold evaluation as the oracle: k=201 sees every training row and votes the prior.
        for (std::size_t f = 0; f < 5; ++f) {
            std::vector<std::size_t> tr, va;
            for (std::size_t i = 0; i < b.y.size(); ++i) (r.folds[i] == static_cast<int>(f) ? va : tr).push_back(i);
            std::array<int, 3> prior{};
            for (auto i : tr) ++prior[static_cast<std::size_t>(b.y[i])];
            const int majority = static_cast<int>(std::max_element(prior.begin(), prior.end()) - prior.begin());
            std::size_t ok = 0;
            for (auto i : va) ok += b.y[i] == majority ? 1 : 0;
            CHECK(r.fold_accuracy[1][f] == doctest::Approx(static_cast<double>(ok) / static_cast<double>(va.size())));
        }
        CHECK(r.mean_accuracy[0] > r.mean_accuracy[1]);
    }

    TEST_CASE("staged ensembles in a grid score as if fitted separately") {
        const auto b = testing::make_blobs({25, 25, 25}, 4, 1.0, 130);
        const CvPlan plan{5, true, 9};
        const auto grid = default_grid(ClassifierKind::GradientBoosting, 2);
        const auto shared = cross_validate(grid, b.x, b.y, plan);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const std::vector<ClassifierSpec> one{grid[g]};
            CHECK(cross_validate(one, b.x, b.y, plan).fold_accuracy[0] == shared.fold_accuracy[g]);
        }
    }

    TEST_CASE("too few rows per class for the folds is an error") {
        const auto b = testing::make_blobs({20, 20, 3}, 2, 1.0, 140);
        const std::vector<ClassifierSpec> grid{spec_of(ClassifierKind::NaiveBayes)};
        CHECK_THROWS_AS(cross_validate(grid, b.x, b.y, {5, true, 1}), Error);
    }
}
