#include "dermbench/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <unordered_set>

namespace dermbench {

std::size_t Manifest::count(Category c) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [c](const SlideMeta& r) { return r.category == c; }));
}

std::size_t Manifest::count(Subset s) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [s](const SlideMeta& r) { return r.subset == s; }));
}

namespace {

enum Column : std::size_t {
    kFullpath, kFile, kCaseId, kSubBlock, kBlock, kDiagScore, kDiagType, kCategory, kSubset, kStaining
};

// Splits one logical record; quoted fields may span physical lines.
// Returns nullopt at end of input.
std::optional<std::vector<std::string>> read_record(std::istream& in, char delim, std::size_t& line) {
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char ch;
    while (in.get(ch)) {
        any = true;
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get(ch);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (ch == '\n') ++line;
                field.push_back(ch);
            }
            continue;
        }
        if (ch == '"') {
            in_quotes = true;
        } else if (ch == delim) {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch == '\r') {
            // tolerate CRLF
        } else if (ch == '\n') {
            ++line;
            fields.push_back(std::move(field));
            return fields;
        } else {
            field.push_back(ch);
        }
    }
    if (in_quotes) throw Error("manifest: unterminated quoted field near line " + std::to_string(line + 1));
    if (!any) return std::nullopt;
    ++line;
    fields.push_back(std::move(field));
    return fields;
}

bool blank(const std::vector<std::string>& fields) {
    return std::all_of(fields.begin(), fields.end(), [](const std::string& f) { return trim(f).empty(); });
}

std::string quote_if_needed(std::string_view value, char delim) {
    const bool needs = value.find_first_of(std::string{delim, '"', '\n', '\r'}) != std::string_view::npos ||
                       trim(value).size() != value.size();
    if (!needs) return std::string(value);
    std::string out = "\"";
    for (char ch : value) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

}  // namespace

Manifest parse_manifest(std::istream& source, ManifestFormat format) {
    std::size_t line = 0;
    auto header = read_record(source, format.delimiter, line);
    while (header && blank(*header)) header = read_record(source, format.delimiter, line);
    if (!header) throw Error("empty manifest");

    std::array<std::optional<std::size_t>, kManifestColumns.size()> position{};
    for (std::size_t i = 0; i < header->size(); ++i) {
        std::string name = lowercase(trim((*header)[i]));
        if (i == 0 && name.starts_with("\xef\xbb\xbf")) name.erase(0, 3);  // UTF-8 BOM
        for (std::size_t c = 0; c < kManifestColumns.size(); ++c) {
            if (name == lowercase(kManifestColumns[c])) {
                if (position[c]) throw Error("manifest: duplicate column '" + std::string(kManifestColumns[c]) + "'");
                position[c] = i;
            }
        }
    }
    for (std::size_t c = 0; c < kManifestColumns.size(); ++c) {
        if (!position[c]) throw Error("manifest: missing required column '" + std::string(kManifestColumns[c]) + "'");
    }

    Manifest manifest;
    std::unordered_set<std::string> seen;
    for (;;) {
        const std::size_t row_line = line + 1;
        auto fields = read_record(source, format.delimiter, line);
        if (!fields) break;
        if (blank(*fields)) continue;
        const auto where = [&] { return "manifest line " + std::to_string(row_line) + ": "; };
        const auto get = [&](Column c) -> std::string {
            const std::size_t idx = *position[c];
            if (idx >= fields->size()) throw Error(where() + "too few fields");
            return std::string(trim((*fields)[idx]));
        };

        SlideMeta meta;
        meta.line = row_line;
        meta.fullpath = get(kFullpath);
        meta.file = get(kFile);
        meta.case_id = get(kCaseId);
        meta.sub_block = get(kSubBlock);
        meta.block = get(kBlock);
        meta.diag_type = get(kDiagType);
        meta.staining = get(kStaining);

        const std::string score = get(kDiagScore);
        int value = 0;
        const auto [ptr, ec] = std::from_chars(score.data(), score.data() + score.size(), value);
        if (score.empty() || ec != std::errc{} || ptr != score.data() + score.size()) {
            throw Error(where() + "unparseable DIAG_SCORE '" + score + "'");
        }
        meta.diag_score = value;

        const std::string category = get(kCategory);
        const auto cat = parse_category(category);
        if (!cat) throw Error(where() + "unknown category '" + category + "'");
        meta.category = *cat;

        const std::string subset = get(kSubset);
        const auto sub = parse_subset(subset);
        if (!sub) throw Error(where() + "unknown subset '" + subset + "'");
        meta.subset = *sub;

        if (meta.file.empty()) throw Error(where() + "empty file name");
        if (!seen.insert(meta.file).second) throw Error(where() + "duplicate file name '" + meta.file + "'");
        manifest.records.push_back(std::move(meta));
    }
    if (manifest.empty()) throw Error("empty manifest");
    return manifest;
}

Manifest parse_manifest_text(std::string_view text, ManifestFormat format) {
    std::istringstream in{std::string(text)};
    return parse_manifest(in, format);
}

Manifest load_manifest(const std::string& path, ManifestFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open manifest " + path);
    return parse_manifest(in, format);
}

std::string serialize_manifest(const Manifest& manifest, ManifestFormat format) {
    std::ostringstream out;
    const char d = format.delimiter;
    for (std::size_t c = 0; c < kManifestColumns.size(); ++c) {
        if (c) out << d;
        out << kManifestColumns[c];
    }
    out << '\n';
    for (const auto& r : manifest.records) {
        out << quote_if_needed(r.fullpath, d) << d << quote_if_needed(r.file, d) << d
            << quote_if_needed(r.case_id, d) << d << quote_if_needed(r.sub_block, d) << d
            << quote_if_needed(r.block, d) << d << r.diag_score << d << quote_if_needed(r.diag_type, d) << d
            << to_string(r.category) << d << to_string(r.subset) << d << quote_if_needed(r.staining, d) << '\n';
    }
    return out.str();
}

Manifest filter_categories(const Manifest& manifest, const std::set<Category>& keep) {
    if (keep.empty()) throw Error("filter_categories: empty keep set");
    Manifest out;
    for (const auto& r : manifest.records) {
        if (keep.contains(r.category)) out.records.push_back(r);
    }
    if (out.empty()) throw Error("no slides remain");
    return out;
}

Manifest classification_slides(const Manifest& manifest) {
    return filter_categories(manifest, {Category::Basaloid, Category::Melanocytic, Category::Squamous});
}

EffectiveSplit effective_split(const Manifest& manifest) {
    EffectiveSplit split;
    split.records = manifest.records;
    split.subsets.reserve(manifest.size());
    for (const auto& r : manifest.records) {
        const auto e = effective(r.subset);
        split.subsets.push_back(e);
        (e == EffectiveSubset::Train ? split.train_count : split.test_count) += 1;
    }
    return split;
}

}  // namespace dermbench
