#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "dermbench/distributions.hpp"
#include "dermbench/evalmetrics.hpp"
#include "dermbench/rocstats.hpp"
#include "support.hpp"

using namespace dermbench;

namespace {

// Two scorers sharing a latent signal. With equal noise the pair is
// exchangeable, so both have the same AUROC in distribution.
PairedScores correlated_pair(std::size_t n, std::uint64_t seed, double noise_a, double noise_b, double effect = 1.0) {
    Rng rng(seed);
    PairedScores ps;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i % 2 == 0 ? 1 : 0;
        const double latent = rng.normal() + effect * label;
        ps.y_true.push_back(label);
        ps.scores_a.push_back(latent + noise_a * rng.normal());
        ps.scores_b.push_back(latent + noise_b * rng.normal());
    }
    return ps;
}

// DeLong variance by direct pair placements, O(m n).
struct PlacementOracle {
    double auc_a, auc_b, var_difference;
};

PlacementOracle placement_delong(const PairedScores& ps) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < ps.y_true.size(); ++i) (ps.y_true[i] ? pos : neg).push_back(i);
    const double m = static_cast<double>(pos.size()), n = static_cast<double>(neg.size());
    const auto psi = [](double x, double y) { return x > y ? 1.0 : (x == y ? 0.5 : 0.0); };
    const auto components = [&](const std::vector<double>& s, std::vector<double>& v10, std::vector<double>& v01) {
        v10.assign(pos.size(), 0.0);
        v01.assign(neg.size(), 0.0);
        for (std::size_t i = 0; i < pos.size(); ++i) {
            for (std::size_t j = 0; j < neg.size(); ++j) {
                const double k = psi(s[pos[i]], s[neg[j]]);
                v10[i] += k / n;
                v01[j] += k / m;
            }
        }
    };
    std::vector<double> a10, a01, b10, b01;
    components(ps.scores_a, a10, a01);
    components(ps.scores_b, b10, b01);
    const auto cov = [](const std::vector<double>& x, const std::vector<double>& y) {
        const double mx = testing::mean(x), my = testing::mean(y);
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
        return s / static_cast<double>(x.size() - 1);
    };
    // Differences of components give the variance of the AUC difference.
    std::vector<double> d10(a10.size()), d01(a01.size());
    for (std::size_t i = 0; i < a10.size(); ++i) d10[i] = a10[i] - b10[i];
    for (std::size_t j = 0; j < a01.size(); ++j) d01[j] = a01[j] - b01[j];
    return {testing::mean(a10), testing::mean(b10), cov(d10, d10) / m + cov(d01, d01) / n};
}

}  // namespace

TEST_SUITE("rocstats") {
    TEST_CASE("normal and t tails match reference distributions") {
        CHECK(std::abs(two_sided_normal_p(1.96) - 0.05) <= 1e-3);
        CHECK(two_sided_normal_p(0.0) == doctest::Approx(1.0));
        const boost::math::normal_distribution<double> gauss;
        for (double z : {-4.0, -1.0, 0.3, 2.5, 6.0}) {
            CHECK(normal_cdf(z) == doctest::Approx(boost::math::cdf(gauss, z)).epsilon(1e-10));
            CHECK(two_sided_normal_p(z) == doctest::Approx(2.0 * boost::math::cdf(boost::math::complement(gauss, std::abs(z)))).epsilon(1e-10));
        }
        for (double df : {1.0, 2.0, 5.0, 29.0, 200.0}) {
            const boost::math::students_t_distribution<double> t(df);
            for (double x : {-3.0, -0.5, 0.0, 1.2, 4.0}) {
                CHECK(student_t_cdf(x, df) == doctest::Approx(boost::math::cdf(t, x)).epsilon(1e-10));
                CHECK(two_sided_t_p(x, df) == doctest::Approx(2.0 * boost::math::cdf(boost::math::complement(t, std::abs(x)))).epsilon(1e-10));
            }
        }
        for (double x : {0.5, 1.0, 3.0}) {
            // Closed form for two degrees of freedom.
            CHECK(two_sided_t_p(x, 2.0) == doctest::Approx(1.0 - x / std::sqrt(x * x + 2.0)).epsilon(1e-12));
        }
        CHECK(regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
        CHECK(regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
        CHECK(regularized_incomplete_beta(1.0, 1.0, 0.37) == doctest::Approx(0.37));
    }

    TEST_CASE("paired t-test examples") {
        const std::vector<double> a{1, 2, 3}, zero{0, 0, 0};
        const auto r = paired_ttest(a, zero);
        CHECK(std::abs(r.t - 3.4641) <= 1e-4);
        CHECK(r.df == 2);
        CHECK(std::abs(r.p - 0.0742) <= 5e-4);
        CHECK(r.mean_difference == doctest::Approx(2.0));

        const auto same = paired_ttest(a, a);
        CHECK(same.t == 0.0);
        CHECK(same.p == 1.0);

        const auto swapped = paired_ttest(zero, a);
        CHECK(swapped.t == doctest::Approx(-r.t));
        CHECK(swapped.p == doctest::Approx(r.p));
        CHECK_THROWS_AS(paired_ttest(std::vector<double>{1.0}, std::vector<double>{0.0}), Error);
        CHECK_THROWS_AS(paired_ttest(a, std::vector<double>{1.0, 2.0}), Error);
    }

    TEST_CASE("DeLong matches the placement computation") {
        for (std::uint64_t seed = 0; seed < 15; ++seed) {
            auto ps = correlated_pair(40 + seed * 7, seed, 0.8, 1.3);
            if (seed % 3 == 0) {
                for (auto& v : ps.scores_a) v = std::round(v * 2.0) / 2.0;  // ties
            }
            const auto r = delong_test(ps);
            const auto oracle = placement_delong(ps);
            CHECK(r.auc_a == doctest::Approx(oracle.auc_a).epsilon(1e-12));
            CHECK(r.auc_b == doctest::Approx(oracle.auc_b).epsilon(1e-12));
            CHECK(r.auc_a == doctest::Approx(testing::brute_auroc(ps.y_true, ps.scores_a)).epsilon(1e-12));
            CHECK(r.var_difference == doctest::Approx(oracle.var_difference).epsilon(1e-9));
            CHECK(r.z == doctest::Approx((oracle.auc_a - oracle.auc_b) / std::sqrt(oracle.var_difference)).epsilon(1e-8));
            CHECK(r.p == doctest::Approx(two_sided_normal_p(r.z)));

            PairedScores swapped{ps.y_true, ps.scores_b, ps.scores_a};
            CHECK(delong_test(swapped).z == doctest::Approx(-r.z));
        }
    }

    TEST_CASE("DeLong self-comparison and invalid input") {
        const auto ps = correlated_pair(50, 3, 1.0, 1.0);
        const auto r = delong_test({ps.y_true, ps.scores_a, ps.scores_a});
        CHECK(r.z == 0.0);
        CHECK(r.p == 1.0);
        CHECK_THROWS_AS(delong_test({{1, 1, 1}, {0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}}), Error);
        CHECK_THROWS_AS(delong_test({{1, 0}, {0.1, NAN}, {0.1, 0.2}}), Error);
        CHECK_THROWS_AS(delong_test({{1, 0}, {0.1}, {0.1, 0.2}}), Error);
    }

    TEST_CASE("DeLong variance agrees with a paired bootstrap") {
        const auto ps = correlated_pair(60, 17, 0.7, 1.1);
        const auto r = delong_test(ps);
        Rng rng(18);
        std::vector<double> diffs, aucs_a;
        while (diffs.size() < 10000) {
            PairedScores boot;
            for (std::size_t i = 0; i < 60; ++i) {
                const auto j = rng.below(60);
                boot.y_true.push_back(ps.y_true[j]);
                boot.scores_a.push_back(ps.scores_a[j]);
                boot.scores_b.push_back(ps.scores_b[j]);
            }
            const auto pos = std::count(boot.y_true.begin(), boot.y_true.end(), 1);
            if (pos == 0 || pos == 60) continue;
            const double a = testing::brute_auroc(boot.y_true, boot.scores_a);
            const double b = testing::brute_auroc(boot.y_true, boot.scores_b);
            diffs.push_back(a - b);
            aucs_a.push_back(a);
        }
        CHECK(std::abs(r.var_difference / testing::variance(diffs) - 1.0) < 0.15);
        CHECK(std::abs(r.var_a / testing::variance(aucs_a) - 1.0) < 0.15);
    }

    TEST_CASE("DeLong holds its size under the null") {
        std::size_t rejected = 0;
        const std::size_t sims = 2000;
        for (std::size_t s = 0; s < sims; ++s) {
            if (delong_test(correlated_pair(100, 1000 + s, 1.0, 1.0)).p < 0.05) ++rejected;
        }
        CHECK(std::abs(static_cast<double>(rejected) / sims - 0.05) <= 0.02);
    }

    TEST_CASE("Venkatraman statistic matches re-thresholding") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto ps = correlated_pair(30 + seed * 5, seed + 50, 0.5, 1.5);
            const auto r = venkatraman_test(ps, 50, seed);
            const double oracle = testing::brute_venkatraman_statistic(ps.y_true, ps.scores_a, ps.scores_b);
            CHECK(r.statistic == oracle);
            CHECK(r.roc_difference == doctest::Approx(oracle / static_cast<double>(ps.y_true.size() * ps.y_true.size())));
        }
    }

    TEST_CASE("Venkatraman p-value bounds, identity and seeding") {
        const std::size_t B = 500;
        const auto ps = correlated_pair(80, 61, 0.3, 3.0, 2.0);
        const auto r = venkatraman_test(ps, B, 7);
        CHECK(r.p >= 1.0 / (B + 1));
        CHECK(r.p <= 1.0);
        CHECK(r.p == doctest::Approx((1.0 + r.at_least_as_extreme) / (B + 1)));
        CHECK(r.p < 0.05);  // a clearly better scorer
        CHECK(venkatraman_test(ps, B, 7).p == r.p);

        const auto same = venkatraman_test({ps.y_true, ps.scores_a, ps.scores_a}, B, 7);
        CHECK(same.statistic == 0.0);
        CHECK(same.p == 1.0);
        CHECK_THROWS_AS(venkatraman_test(ps, 0, 1), Error);
    }

    TEST_CASE("Venkatraman on a noisy copy agrees with a direct permutation oracle") {
        Rng rng(71);
        PairedScores ps;
        for (std::size_t i = 0; i < 80; ++i) {
            ps.y_true.push_back(i % 2 == 0 ? 1 : 0);
            // Per-case exchangeable copies of one latent score, close enough that
            // only nearby ranks trade places.
            const double latent = rng.normal() + 0.8 * ps.y_true.back();
            ps.scores_a.push_back(latent + 0.05 * rng.normal());
            ps.scores_b.push_back(latent + 0.05 * rng.normal());
        }
        const double oracle = testing::permutation_p_oracle(ps.y_true, ps.scores_a, ps.scores_b, 2000, 72);
        double lo = 1.0, hi = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const double p = venkatraman_test(ps, 2000, seed).p;
            lo = std::min(lo, p);
            hi = std::max(hi, p);
        }
        CHECK(venkatraman_test(ps, 1, 0).statistic > 0.0);
        CHECK(oracle > 0.2);
        CHECK(lo > 0.2);
        CHECK(hi - lo < 0.1);
        CHECK(std::abs(venkatraman_test(ps, 2000, 0).p - oracle) < 0.05);
    }

    TEST_CASE("Venkatraman rejects at roughly its level under the null") {
        std::size_t rejected = 0;
        const std::size_t sims = 200;
        for (std::size_t s = 0; s < sims; ++s) {
            if (venkatraman_test(correlated_pair(60, 5000 + s, 1.0, 1.0), 200, s).p < 0.05) ++rejected;
        }
        const double rate = static_cast<double>(rejected) / sims;
        CHECK(rate >= 0.01);
        CHECK(rate <= 0.10);
    }

    TEST_CASE("three-class comparison runs one test per category") {
        Rng rng(90);
        const std::size_t n = 90;
        std::vector<int> y;
        Matrix a(n, 3), b(n, 3);
        for (std::size_t i = 0; i < n; ++i) {
            y.push_back(static_cast<int>(i % 3));
            for (std::size_t k = 0; k < 3; ++k) {
                a(i, k) = rng.uniform() + (static_cast<int>(k) == y.back() ? 0.8 : 0.0);
                b(i, k) = rng.uniform() + (static_cast<int>(k) == y.back() ? 0.2 : 0.0);
            }
        }
        const auto r = compare_probabilities(y, a, b, 200, 3);
        REQUIRE(r.per_category.size() == 3);
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(r.per_category[k].category == kClassOrder[k]);
            CHECK(r.per_category[k].delong.auc_a > r.per_category[k].delong.auc_b);
            CHECK(r.per_category[k].delong.z > 0.0);
            std::vector<int> yk;
            std::vector<double> sk;
            for (std::size_t i = 0; i < n; ++i) {
                yk.push_back(y[i] == static_cast<int>(k) ? 1 : 0);
                sk.push_back(a(i, k));
            }
            CHECK(r.per_category[k].delong.auc_a == doctest::Approx(auroc(yk, sk)));
        }
        CHECK(compare_probabilities(y, a, b, 200, 3).per_category[0].venkatraman.p == r.per_category[0].venkatraman.p);
        CHECK_THROWS_AS(compare_probabilities(y, a, Matrix(n - 1, 3), 10, 1), Error);
        CHECK(to_json(r)["categories"].size() == 3);
    }
}
