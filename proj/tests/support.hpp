#pragma once

// Shared helpers and independent reference computations for the unit tests.
// Nothing here calls into the code under test except to build inputs.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "dermbench/core.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("dermbench-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    std::string str() const { return path_.string(); }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

/// P(s+ > s-) + 0.5 P(s+ = s-) by counting every positive/negative pair.
inline double brute_auroc(const std::vector<int>& labels, const std::vector<double>& scores) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) {
                wins += 1.0;
            } else if (scores[i] == scores[j]) {
                wins += 0.5;
            }
        }
    }
    return wins / static_cast<double>(pairs);
}

/// Gaussian clusters around orthogonal axis-aligned means.
struct Blobs {
    dermbench::Matrix x;
    std::vector<int> y;
};

inline Blobs make_blobs(const std::vector<std::size_t>& per_class, std::size_t d, double separation,
                        std::uint64_t seed, double noise = 1.0) {
    dermbench::Rng rng(seed);
    Blobs b;
    std::size_t n = 0;
    for (auto c : per_class) n += c;
    b.x = dermbench::Matrix(n, d);
    std::size_t row = 0;
    for (std::size_t k = 0; k < per_class.size(); ++k) {
        for (std::size_t i = 0; i < per_class[k]; ++i, ++row) {
            for (std::size_t j = 0; j < d; ++j) b.x(row, j) = noise * rng.normal() + (j == k % d ? separation : 0.0);
            b.y.push_back(static_cast<int>(k));
        }
    }
    return b;
}

/// Multiclass perceptron with bias; returns the number of training errors
/// left after `epochs` passes (0 certifies linear separability).
inline std::size_t perceptron_errors(const dermbench::Matrix& x, const std::vector<int>& y, std::size_t classes,
                                     std::size_t epochs) {
    std::vector<std::vector<double>> w(classes, std::vector<double>(x.cols + 1, 0.0));
    std::size_t errors = 0;
    for (std::size_t e = 0; e < epochs; ++e) {
        errors = 0;
        for (std::size_t i = 0; i < x.rows; ++i) {
            std::size_t best = 0;
            double best_score = -1e300;
            for (std::size_t k = 0; k < classes; ++k) {
                double s = w[k][x.cols];
                for (std::size_t j = 0; j < x.cols; ++j) s += w[k][j] * x(i, j);
                if (s > best_score) {
                    best_score = s;
                    best = k;
                }
            }
            const auto truth = static_cast<std::size_t>(y[i]);
            if (best != truth) {
                ++errors;
                for (std::size_t j = 0; j < x.cols; ++j) {
                    w[truth][j] += x(i, j);
                    w[best][j] -= x(i, j);
                }
                w[truth][x.cols] += 1.0;
                w[best][x.cols] -= 1.0;
            }
        }
        if (errors == 0) break;
    }
    return errors;
}

/// Venkatraman's statistic by re-thresholding at every rank cutoff: ranks are
/// counts of strictly smaller scores, so inputs should be free of ties.
inline double brute_venkatraman_statistic(const std::vector<int>& y, const std::vector<double>& a,
                                          const std::vector<double>& b) {
    const std::size_t n = y.size();
    const auto ranks = [&](const std::vector<double>& s) {
        std::vector<std::size_t> r(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) r[i] += s[j] < s[i] ? 1 : 0;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        long long ea = 0, eb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool pos = y[i] == 1;
            ea += (pos && ra[i] <= c) || (!pos && ra[i] > c) ? 1 : 0;
            eb += (pos && rb[i] <= c) || (!pos && rb[i] > c) ? 1 : 0;
        }
        total += static_cast<double>(ea > eb ? ea - eb : eb - ea);
    }
    return total;
}

/// Permutation p-value with its own random stream: rank-transform both
/// scorers, exchange each case's pair of ranks with probability 1/2, break the
/// resulting ties at random and recount with the brute statistic.
inline double permutation_p_oracle(const std::vector<int>& y, const std::vector<double>& a, const std::vector<double>& b,
                                   std::size_t permutations, std::uint64_t seed) {
    const std::size_t n = y.size();
    const auto rank_of = [&](const std::vector<double>& s) {
        std::vector<double> r(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) r[i] += s[j] < s[i] ? 1.0 : 0.0;
        }
        return r;
    };
    const auto ra = rank_of(a), rb = rank_of(b);
    const double observed = brute_venkatraman_statistic(y, a, b);
    dermbench::Rng rng(seed ^ 0x5eed5eed5eedULL);
    std::size_t extreme = 0;
    std::vector<double> pa(n), pb(n);
    for (std::size_t p = 0; p < permutations; ++p) {
        for (std::size_t i = 0; i < n; ++i) {
            const bool swap = (rng.next() >> 63) != 0;
            pa[i] = (swap ? rb[i] : ra[i]) + 0.9 * (rng.uniform() - 0.5);
            pb[i] = (swap ? ra[i] : rb[i]) + 0.9 * (rng.uniform() - 0.5);
        }
        if (brute_venkatraman_statistic(y, pa, pb) >= observed) ++extreme;
    }
    return static_cast<double>(1 + extreme) / static_cast<double>(permutations + 1);
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace testing
