#pragma once

// Slide-level features by mean pooling, and the design-matrix container.
//
// .dmat layout (little-endian):
//   "DMAT" | u32 version=1 | u32 n | u32 d | n*d f32 row-major | n u8 labels |
//   n u8 subsets | n x (u16 length + UTF-8 slide id) | u32 CRC-32 of all preceding bytes

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dermbench/core.hpp"
#include "dermbench/embedder.hpp"
#include "dermbench/manifest.hpp"

namespace dermbench {

struct DesignMatrix {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<float> rows;  // n*d row-major
    std::vector<Category> labels;
    std::vector<EffectiveSubset> subsets;
    std::vector<std::string> slide_ids;

    std::span<const float> row(std::size_t i) const { return {rows.data() + i * d, d}; }
    std::size_t count(EffectiveSubset s) const;

    /// Features widened to double.
    Matrix features() const;
    /// Class indices 0..2 in kClassOrder.
    std::vector<int> class_indices() const;
    /// Rows at the given indices, in that order.
    DesignMatrix select(std::span<const std::size_t> indices) const;

    bool operator==(const DesignMatrix&) const = default;
};

/// Coordinate-wise mean, summed in double precision in ascending patch order.
std::vector<float> mean_aggregate(const EmbeddingMatrix& e);

/// One row per manifest record (manifest order) from `<cache_dir>/<backend>/<file>.embc`.
/// Throws listing every missing slide, or on mixed dimensions.
DesignMatrix build_design(const Manifest& manifest, const std::string& cache_dir, const std::string& backend_name);

/// Partition by effective subset, order preserved within each part.
std::pair<DesignMatrix, DesignMatrix> split_design(const DesignMatrix& dm);

void validate(const DesignMatrix& dm);

inline constexpr std::uint32_t kDmatVersion = 1;

std::vector<std::uint8_t> encode_dmat(const DesignMatrix& dm);
DesignMatrix decode_dmat(std::span<const std::uint8_t> bytes);
void write_design(const DesignMatrix& dm, const std::string& path);
DesignMatrix read_design(const std::string& path);

}  // namespace dermbench
