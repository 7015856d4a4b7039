#pragma once

// Per-slide patch embeddings: pluggable backends and the `.embc` cache format.
//
// .embc layout (little-endian):
//   "EMBC" | u32 version=1 | u16 id length | id bytes (UTF-8) | u8 label code |
//   u8 subset code | u32 m | u32 d | m*d f32 row-major | u32 CRC-32 of the f32 payload

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dermbench/core.hpp"
#include "dermbench/manifest.hpp"
#include "dermbench/patchworks.hpp"

namespace dermbench {

struct EmbeddingMatrix {
    std::string slide_id;
    std::size_t m = 0;  // patches
    std::size_t d = 0;  // embedding dimension
    std::vector<float> data;  // m*d row-major
    Category label = Category::Other;
    EffectiveSubset subset = EffectiveSubset::Train;

    std::span<const float> row(std::size_t i) const { return {data.data() + i * d, d}; }
    bool operator==(const EmbeddingMatrix&) const = default;
};

enum class BackendKind { Precomputed, Synthetic };

struct BackendSpec {
    std::string name;  // cache subdirectory, e.g. "uni"
    BackendKind kind = BackendKind::Synthetic;
    std::size_t dim = 1024;
    std::uint64_t seed = 0;
    std::string source_dir;  // precomputed only
    double class_separation = 6.0;  // synthetic only
};

void validate(const BackendSpec& spec);

/// Synthetic class means: orthonormal directions (one per class) scaled by the
/// class separation. Row c belongs to class code c.
Matrix synthetic_class_means(const BackendSpec& spec);

/// Synthetic: each patch row ~ N(mean(label), I), seeded by (seed, slide_id, row).
/// Precomputed: loads `<source_dir>/<slide_id>.embc` and checks it against the request.
EmbeddingMatrix extract(const std::string& slide_id, std::size_t patch_count, const BackendSpec& backend,
                        Category label, EffectiveSubset subset);

/// Same as above with the patch count taken from the preprocessed patches. The
/// synthetic backend does not look at pixel values.
EmbeddingMatrix extract(const std::string& slide_id, std::span<const NormalizedPatch> patches,
                        const BackendSpec& backend, Category label, EffectiveSubset subset);

inline constexpr std::uint32_t kEmbcVersion = 1;

std::vector<std::uint8_t> encode_embc(const EmbeddingMatrix& e);
EmbeddingMatrix decode_embc(std::span<const std::uint8_t> bytes);

std::string cache_path(const std::string& dir, const std::string& slide_id);
/// Writes `<dir>/<slide_id>.embc` and returns its path.
std::string write_cache(const EmbeddingMatrix& e, const std::string& dir);
EmbeddingMatrix read_cache(const std::string& path);

struct CacheCoverage {
    std::vector<std::string> present;
    std::vector<std::string> missing;
    std::vector<std::string> orphaned;  // cache files with no manifest entry, sorted
};

/// Report-only: never throws for missing or unreadable directories.
CacheCoverage scan_cache(const std::string& dir, const Manifest& manifest);

}  // namespace dermbench
