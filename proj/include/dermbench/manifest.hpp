#pragma once

#include <array>
#include <cstddef>
#include <istream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dermbench/core.hpp"

namespace dermbench {

/// One slide's metadata row. `file` is the join key to the embedding caches.
struct SlideMeta {
    std::string fullpath;
    std::string file;
    std::string case_id;
    std::string sub_block;
    std::string block;
    int diag_score = 0;
    std::string diag_type;
    Category category = Category::Other;
    Subset subset = Subset::Train;
    std::string staining;
    /// 1-based line of the source row, 0 when built in memory.
    std::size_t line = 0;

    bool operator==(const SlideMeta& other) const = default;
};

struct Manifest {
    std::vector<SlideMeta> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    std::size_t count(Category c) const;
    std::size_t count(Subset s) const;
};

/// Canonical column names, in serialization order.
inline constexpr std::array<std::string_view, 10> kManifestColumns{
    "fullpath", "file", "case_id", "sub_block", "block",
    "DIAG_SCORE", "DIAG_TYPE", "category", "subset", "Staining"};

struct ManifestFormat {
    char delimiter = ',';
};

/// Parses a delimited manifest with a header naming the ten metadata columns
/// (any order, case-insensitive). Quoted fields follow RFC 4180.
Manifest parse_manifest(std::istream& source, ManifestFormat format = {});
Manifest parse_manifest_text(std::string_view text, ManifestFormat format = {});
Manifest load_manifest(const std::string& path, ManifestFormat format = {});

std::string serialize_manifest(const Manifest& manifest, ManifestFormat format = {});

/// Keeps records whose category is in `keep`, preserving order.
Manifest filter_categories(const Manifest& manifest, const std::set<Category>& keep);

/// Filter used by every classification task: drops Other.
Manifest classification_slides(const Manifest& manifest);

struct EffectiveSplit {
    std::vector<SlideMeta> records;
    std::vector<EffectiveSubset> subsets;  // aligned with records
    std::size_t train_count = 0;
    std::size_t test_count = 0;
};

/// Folds the validation subset into test.
EffectiveSplit effective_split(const Manifest& manifest);

}  // namespace dermbench
