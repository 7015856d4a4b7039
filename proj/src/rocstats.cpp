#include "dermbench/rocstats.hpp"

#include "dermbench/distributions.hpp"
#include "dermbench/evalmetrics.hpp"
#include "dermbench/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dermbench {

namespace {

// 1-based ranks, tied values share their average rank.
std::vector<double> midranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t p = i; p < j; ++p) rank[order[p]] = r;
        i = j;
    }
    return rank;
}

// Ranks 0..n-1 with ties resolved by position.
std::vector<std::uint32_t> ordinal_ranks(std::span<const double> v) {
    std::vector<std::uint32_t> order(v.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return v[a] < v[b]; });
    std::vector<std::uint32_t> rank(v.size());
    for (std::uint32_t p = 0; p < order.size(); ++p) rank[order[p]] = p;
    return rank;
}

struct Components {
    double auc = 0.0;
    std::vector<double> v10;  // per positive
    std::vector<double> v01;  // per negative
};

Components structural_components(std::span<const int> y, std::span<const double> s) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? pos : neg).push_back(s[i]);
    const double m = static_cast<double>(pos.size()), n = static_cast<double>(neg.size());
    const auto tz = midranks(s);
    const auto tx = midranks(pos);
    const auto ty = midranks(neg);
    Components c;
    c.v10.reserve(pos.size());
    c.v01.reserve(neg.size());
    double pos_sum = 0.0;
    std::size_t ip = 0, in = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i]) {
            pos_sum += tz[i];
            c.v10.push_back((tz[i] - tx[ip++]) / n);
        } else {
            c.v01.push_back(1.0 - (tz[i] - ty[in++]) / m);
        }
    }
    c.auc = (pos_sum - m * (m + 1.0) / 2.0) / (m * n);
    return c;
}

double sample_covariance(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    if (n < 2) return 0.0;
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (a[i] - ma) * (b[i] - mb);
    return s / static_cast<double>(n - 1);
}

// Sum over rank cutoffs c of |errors_b(c) - errors_a(c)|, where errors(c)
// counts positives ranked <= c plus negatives ranked > c.
double venkatraman_statistic(std::span<const std::uint32_t> ra, std::span<const std::uint32_t> rb,
                             std::span<const int> y, std::size_t n_neg) {
    const std::size_t n = y.size();
    std::vector<int> label_a(n), label_b(n);
    for (std::size_t i = 0; i < n; ++i) {
        label_a[ra[i]] = y[i];
        label_b[rb[i]] = y[i];
    }
    long long fn_a = 0, fn_b = 0, neg_le_a = 0, neg_le_b = 0;
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        (label_a[c] ? fn_a : neg_le_a) += 1;
        (label_b[c] ? fn_b : neg_le_b) += 1;
        const long long err_a = fn_a + static_cast<long long>(n_neg) - neg_le_a;
        const long long err_b = fn_b + static_cast<long long>(n_neg) - neg_le_b;
        total += static_cast<double>(std::llabs(err_b - err_a));
    }
    return total;
}

}  // namespace

void validate(const PairedScores& ps) {
    const std::size_t n = ps.y_true.size();
    if (ps.scores_a.size() != n || ps.scores_b.size() != n) throw Error("paired scores: lengths differ");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (ps.y_true[i] != 0 && ps.y_true[i] != 1) throw Error("paired scores: labels must be 0 or 1");
        if (!std::isfinite(ps.scores_a[i]) || !std::isfinite(ps.scores_b[i])) throw Error("paired scores: non-finite score");
        pos += static_cast<std::size_t>(ps.y_true[i]);
    }
    if (pos == 0 || pos == n) throw Error("paired scores: single-class labels");
}

DelongResult delong_test(const PairedScores& ps) {
    validate(ps);
    const auto a = structural_components(ps.y_true, ps.scores_a);
    const auto b = structural_components(ps.y_true, ps.scores_b);
    const double m = static_cast<double>(a.v10.size()), n = static_cast<double>(a.v01.size());
    DelongResult r;
    r.auc_a = a.auc;
    r.auc_b = b.auc;
    r.var_a = sample_covariance(a.v10, a.v10) / m + sample_covariance(a.v01, a.v01) / n;
    r.var_b = sample_covariance(b.v10, b.v10) / m + sample_covariance(b.v01, b.v01) / n;
    r.covariance = sample_covariance(a.v10, b.v10) / m + sample_covariance(a.v01, b.v01) / n;
    r.var_difference = r.var_a + r.var_b - 2.0 * r.covariance;
    if (r.var_difference < 1e-12) {
        r.z = 0.0;
        r.p = 1.0;
        return r;
    }
    r.z = (r.auc_a - r.auc_b) / std::sqrt(r.var_difference);
    r.p = two_sided_normal_p(r.z);
    return r;
}

VenkatramanResult venkatraman_test(const PairedScores& ps, std::size_t permutations, std::uint64_t seed) {
    validate(ps);
    if (permutations == 0) throw Error("venkatraman: need at least one permutation");
    const std::size_t n = ps.y_true.size();
    const std::size_t n_neg = static_cast<std::size_t>(std::count(ps.y_true.begin(), ps.y_true.end(), 0));
    const auto ra = ordinal_ranks(ps.scores_a);
    const auto rb = ordinal_ranks(ps.scores_b);

    VenkatramanResult r;
    r.permutations = permutations;
    r.seed = seed;
    r.statistic = venkatraman_statistic(ra, rb, ps.y_true, n_neg);
    r.roc_difference = r.statistic / (static_cast<double>(n) * static_cast<double>(n));

    std::vector<std::uint8_t> exceeds(permutations, 0);
    parallel_for(permutations, [&](std::size_t b) {
        Rng rng(derive_seed(seed, "venkatraman.permutation", b));
        std::vector<double> pa(n), pb(n);
        for (std::size_t i = 0; i < n; ++i) {
            const bool swap = rng.uniform() < 0.5;
            // Jitter of less than half a rank only breaks the ties that the
            // exchange creates; it never reorders distinct ranks.
            pa[i] = static_cast<double>(swap ? rb[i] : ra[i]) + rng.uniform() - 0.5;
            pb[i] = static_cast<double>(swap ? ra[i] : rb[i]) + rng.uniform() - 0.5;
        }
        const double stat = venkatraman_statistic(ordinal_ranks(pa), ordinal_ranks(pb), ps.y_true, n_neg);
        exceeds[b] = stat >= r.statistic ? 1 : 0;
    });
    r.at_least_as_extreme = static_cast<std::size_t>(std::count(exceeds.begin(), exceeds.end(), 1));
    r.p = static_cast<double>(1 + r.at_least_as_extreme) / static_cast<double>(permutations + 1);
    return r;
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error("paired t-test: lengths differ");
    if (a.size() < 2) throw Error("paired t-test: need at least two pairs");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw Error("paired t-test: non-finite value");
        d[i] = a[i] - b[i];
    }
    TTestResult r;
    r.df = n - 1;
    r.mean_difference = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    if (std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; })) return r;
    double ss = 0.0;
    for (double x : d) ss += (x - r.mean_difference) * (x - r.mean_difference);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) {
        r.t = r.mean_difference > 0.0 ? HUGE_VAL : -HUGE_VAL;
        r.p = 0.0;
        return r;
    }
    r.t = r.mean_difference / (sd / std::sqrt(static_cast<double>(n)));
    r.p = two_sided_t_p(r.t, static_cast<double>(r.df));
    return r;
}

ComparisonResult compare_probabilities(std::span<const int> y_true, const Matrix& proba_a, const Matrix& proba_b,
                                       std::size_t permutations, std::uint64_t seed) {
    if (proba_a.rows != y_true.size() || proba_b.rows != y_true.size() || proba_a.cols != kNumClasses ||
        proba_b.cols != kNumClasses) {
        throw Error("compare: probability matrices do not match the labels");
    }
    ComparisonResult out;
    out.n_test = y_true.size();
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        PairedScores ps;
        for (std::size_t i = 0; i < y_true.size(); ++i) {
            ps.y_true.push_back(y_true[i] == static_cast<int>(k) ? 1 : 0);
            ps.scores_a.push_back(proba_a(i, k));
            ps.scores_b.push_back(proba_b(i, k));
        }
        CategoryComparison c;
        c.category = kClassOrder[k];
        c.delong = delong_test(ps);
        c.venkatraman = venkatraman_test(ps, permutations, derive_seed(seed, to_string(kClassOrder[k])));
        out.per_category.push_back(c);
    }
    return out;
}

nlohmann::ordered_json to_json(const ComparisonResult& r) {
    using nlohmann::ordered_json;
    const auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(v > 0 ? "inf" : "-inf"); };
    ordered_json j;
    j["backend_a"] = r.backend_a;
    j["backend_b"] = r.backend_b;
    j["classifier"] = r.classifier;
    j["n_test"] = r.n_test;
    ordered_json cats = ordered_json::object();
    for (const auto& c : r.per_category) {
        ordered_json e;
        e["delong"] = {{"auc_a", c.delong.auc_a},
                       {"auc_b", c.delong.auc_b},
                       {"var_difference", c.delong.var_difference},
                       {"z", c.delong.z},
                       {"p", c.delong.p}};
        e["venkatraman"] = {{"roc_difference", c.venkatraman.roc_difference},
                            {"statistic", c.venkatraman.statistic},
                            {"p", c.venkatraman.p},
                            {"permutations", c.venkatraman.permutations},
                            {"seed", c.venkatraman.seed}};
        cats[std::string(to_string(c.category))] = e;
    }
    j["categories"] = cats;
    ordered_json acc = ordered_json::array();
    for (std::size_t i = 0; i < r.accuracy_classifiers.size(); ++i) {
        acc.push_back({{"classifier", r.accuracy_classifiers[i]}, {"a", r.accuracy_a[i]}, {"b", r.accuracy_b[i]}});
    }
    j["accuracy_pairs"] = acc;
    j["paired_ttest"] = {{"t", num(r.ttest.t)}, {"df", r.ttest.df}, {"p", r.ttest.p},
                         {"mean_difference", r.ttest.mean_difference}};
    return j;
}

}  // namespace dermbench
