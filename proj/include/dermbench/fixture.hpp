#pragma once

// Synthetic manifests with the cohort's shape: 960 slides, 126 basaloid /
// 263 melanocytic / 325 squamous / 246 other, and the 714 classification
// slides split 498 train / 108 validation / 108 test, proportionally per class.

#include <array>
#include <cstddef>
#include <cstdint>

#include "dermbench/manifest.hpp"

namespace dermbench {

struct FixtureShape {
    std::array<std::size_t, 4> category_counts{126, 263, 325, 246};  // by Category code
    std::size_t train = 498;
    std::size_t validation = 108;
    std::size_t test = 108;
};

/// Deterministic in `seed`; records are shuffled so classes interleave.
Manifest make_fixture_manifest(std::uint64_t seed, const FixtureShape& shape = {});

}  // namespace dermbench
