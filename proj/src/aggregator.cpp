#include "dermbench/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

namespace dermbench {

namespace fs = std::filesystem;

std::size_t DesignMatrix::count(EffectiveSubset s) const {
    return static_cast<std::size_t>(std::count(subsets.begin(), subsets.end(), s));
}

Matrix DesignMatrix::features() const {
    Matrix x(n, d);
    std::copy(rows.begin(), rows.end(), x.data.begin());
    return x;
}

std::vector<int> DesignMatrix::class_indices() const {
    std::vector<int> y;
    y.reserve(labels.size());
    for (auto c : labels) {
        if (c == Category::Other) throw Error("design matrix contains an 'other' label");
        y.push_back(static_cast<int>(class_index(c)));
    }
    return y;
}

DesignMatrix DesignMatrix::select(std::span<const std::size_t> indices) const {
    DesignMatrix out;
    out.n = indices.size();
    out.d = d;
    out.rows.reserve(out.n * d);
    for (std::size_t i : indices) {
        if (i >= n) throw Error("design matrix: row index out of range");
        const auto r = row(i);
        out.rows.insert(out.rows.end(), r.begin(), r.end());
        out.labels.push_back(labels[i]);
        out.subsets.push_back(subsets[i]);
        out.slide_ids.push_back(slide_ids[i]);
    }
    return out;
}

void validate(const DesignMatrix& dm) {
    if (dm.rows.size() != dm.n * dm.d || dm.labels.size() != dm.n || dm.subsets.size() != dm.n ||
        dm.slide_ids.size() != dm.n) {
        throw Error("design matrix: arrays are not aligned");
    }
    if (std::find(dm.labels.begin(), dm.labels.end(), Category::Other) != dm.labels.end()) {
        throw Error("design matrix contains an 'other' label");
    }
}

std::vector<float> mean_aggregate(const EmbeddingMatrix& e) {
    if (e.m == 0) throw Error("mean_aggregate: slide '" + e.slide_id + "' has no patches");
    std::vector<double> acc(e.d, 0.0);
    for (std::size_t i = 0; i < e.m; ++i) {
        const auto r = e.row(i);
        for (std::size_t j = 0; j < e.d; ++j) acc[j] += r[j];
    }
    std::vector<float> out(e.d);
    const double inv_m = 1.0 / static_cast<double>(e.m);
    for (std::size_t j = 0; j < e.d; ++j) out[j] = static_cast<float>(acc[j] * inv_m);
    return out;
}

DesignMatrix build_design(const Manifest& manifest, const std::string& cache_dir, const std::string& backend_name) {
    const std::string dir = (fs::path(cache_dir) / backend_name).string();
    std::vector<std::string> missing;
    for (const auto& r : manifest.records) {
        if (r.category == Category::Other) throw Error("build_design: slide '" + r.file + "' is labelled 'other'");
        if (!fs::exists(cache_path(dir, r.file))) missing.push_back(r.file);
    }
    if (!missing.empty()) {
        std::string msg = "build_design: missing " + std::to_string(missing.size()) + " cache file(s) in " + dir + ":";
        for (const auto& id : missing) msg += " " + id;
        throw Error(msg);
    }

    DesignMatrix dm;
    dm.n = manifest.size();
    for (const auto& r : manifest.records) {
        const EmbeddingMatrix e = read_cache(cache_path(dir, r.file));
        if (e.slide_id != r.file) throw Error("build_design: cache for '" + r.file + "' holds '" + e.slide_id + "'");
        if (dm.rows.empty()) {
            dm.d = e.d;
            dm.rows.reserve(dm.n * dm.d);
        } else if (e.d != dm.d) {
            throw Error("build_design: mixed dimensions (" + std::to_string(dm.d) + " vs " + std::to_string(e.d) +
                        " for '" + r.file + "')");
        }
        const auto mean = mean_aggregate(e);
        dm.rows.insert(dm.rows.end(), mean.begin(), mean.end());
        dm.labels.push_back(r.category);
        dm.subsets.push_back(effective(r.subset));
        dm.slide_ids.push_back(r.file);
    }
    return dm;
}

std::pair<DesignMatrix, DesignMatrix> split_design(const DesignMatrix& dm) {
    validate(dm);
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < dm.n; ++i) (dm.subsets[i] == EffectiveSubset::Train ? train : test).push_back(i);
    if (train.empty()) throw Error("empty train partition");
    if (test.empty()) throw Error("empty test partition");
    return {dm.select(train), dm.select(test)};
}

std::vector<std::uint8_t> encode_dmat(const DesignMatrix& dm) {
    validate(dm);
    constexpr auto kU32Max = std::numeric_limits<std::uint32_t>::max();
    if (dm.n > kU32Max || dm.d > kU32Max) throw Error("dmat: dimension overflow");
    ByteWriter w;
    w.raw("DMAT");
    w.u32(kDmatVersion);
    w.u32(static_cast<std::uint32_t>(dm.n));
    w.u32(static_cast<std::uint32_t>(dm.d));
    for (float v : dm.rows) w.f32(v);
    for (auto c : dm.labels) w.u8(static_cast<std::uint8_t>(c));
    for (auto s : dm.subsets) w.u8(static_cast<std::uint8_t>(s));
    for (const auto& id : dm.slide_ids) w.str16(id);
    w.crc_since(0);
    return w.take();
}

DesignMatrix decode_dmat(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic("DMAT");
    const auto version = r.u32();
    if (version != kDmatVersion) throw FormatError("dmat: version mismatch (" + std::to_string(version) + ")");
    DesignMatrix dm;
    dm.n = r.u32();
    dm.d = r.u32();
    const std::uint64_t count = static_cast<std::uint64_t>(dm.n) * dm.d;
    if (count > r.remaining() / 4) throw FormatError("truncated payload");
    dm.rows.resize(count);
    for (auto& v : dm.rows) v = r.f32();
    for (std::size_t i = 0; i < dm.n; ++i) {
        const auto c = category_from_code(r.u8());
        if (!c || *c == Category::Other) throw FormatError("dmat: invalid label code");
        dm.labels.push_back(*c);
    }
    for (std::size_t i = 0; i < dm.n; ++i) {
        const auto s = effective_subset_from_code(r.u8());
        if (!s) throw FormatError("dmat: invalid subset code");
        dm.subsets.push_back(*s);
    }
    for (std::size_t i = 0; i < dm.n; ++i) dm.slide_ids.push_back(r.str16());
    r.check_crc_since(0);
    if (r.remaining() != 0) throw FormatError("dmat: trailing bytes");
    return dm;
}

void write_design(const DesignMatrix& dm, const std::string& path) { write_file_bytes(path, encode_dmat(dm)); }

DesignMatrix read_design(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_dmat(bytes);
    } catch (const FormatError& err) {
        throw FormatError(path + ": " + err.what());
    }
}

}  // namespace dermbench
