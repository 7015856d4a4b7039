#include "dermbench/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <unordered_set>

namespace dermbench {

namespace fs = std::filesystem;

void validate(const BackendSpec& spec) {
    if (spec.name.empty()) throw Error("backend: name must not be empty");
    if (spec.dim == 0) throw Error("backend '" + spec.name + "': dim must be > 0");
    if (spec.kind == BackendKind::Synthetic) {
        if (!(spec.class_separation >= 0.0) || !std::isfinite(spec.class_separation)) {
            throw Error("backend '" + spec.name + "': class_separation must be finite and >= 0");
        }
        if (spec.dim < kNumClasses) throw Error("backend '" + spec.name + "': synthetic dim must be >= 3");
    } else if (spec.source_dir.empty()) {
        throw Error("backend '" + spec.name + "': precomputed backend needs a source directory");
    }
}

Matrix synthetic_class_means(const BackendSpec& spec) {
    const std::size_t d = spec.dim;
    Matrix dirs(kNumClasses, d);
    Rng rng(derive_seed(spec.seed, "class-directions"));
    // Gram-Schmidt on Gaussian draws.
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto v = dirs.row(c);
        for (auto& x : v) x = rng.normal();
        for (std::size_t prev = 0; prev < c; ++prev) {
            const auto u = dirs.row(prev);
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += v[j] * u[j];
            for (std::size_t j = 0; j < d; ++j) v[j] -= dot * u[j];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (auto& x : v) x /= norm;
    }
    for (auto& x : dirs.data) x *= spec.class_separation;
    return dirs;
}

namespace {

void check_slide_id(const std::string& id) {
    if (id.empty()) throw Error("slide id must not be empty");
    if (id.find('/') != std::string::npos || id.find('\\') != std::string::npos || id == "." || id == "..") {
        throw Error("slide id '" + id + "' is not a valid file name");
    }
    if (id.size() > 0xffff) throw Error("slide id too long");
}

EmbeddingMatrix synthesize(const std::string& slide_id, std::size_t m, const BackendSpec& backend, Category label,
                           EffectiveSubset subset) {
    const Matrix means = synthetic_class_means(backend);
    EmbeddingMatrix e{slide_id, m, backend.dim, std::vector<float>(m * backend.dim), label, subset};
    const bool has_mean = label != Category::Other;
    for (std::size_t i = 0; i < m; ++i) {
        Rng rng(derive_seed(backend.seed, slide_id, i));
        float* out = e.data.data() + i * backend.dim;
        for (std::size_t j = 0; j < backend.dim; ++j) {
            const double mu = has_mean ? means(class_index(label), j) : 0.0;
            out[j] = static_cast<float>(mu + rng.normal());
        }
    }
    return e;
}

}  // namespace

EmbeddingMatrix extract(const std::string& slide_id, std::size_t patch_count, const BackendSpec& backend,
                        Category label, EffectiveSubset subset) {
    validate(backend);
    check_slide_id(slide_id);
    if (backend.kind == BackendKind::Synthetic) {
        if (patch_count == 0) throw Error("extract: slide '" + slide_id + "' has zero patches");
        return synthesize(slide_id, patch_count, backend, label, subset);
    }

    const std::string path = cache_path(backend.source_dir, slide_id);
    if (!fs::exists(path)) throw Error("extract: precomputed embeddings missing for '" + slide_id + "' (" + path + ")");
    EmbeddingMatrix e = read_cache(path);
    if (e.slide_id != slide_id) throw Error("extract: " + path + " holds slide '" + e.slide_id + "'");
    if (e.d != backend.dim) {
        throw Error("extract: " + path + " has d=" + std::to_string(e.d) + ", backend expects " +
                    std::to_string(backend.dim));
    }
    if (e.label != label) throw Error("extract: " + path + " label disagrees with the manifest");
    e.subset = subset;
    return e;
}

EmbeddingMatrix extract(const std::string& slide_id, std::span<const NormalizedPatch> patches,
                        const BackendSpec& backend, Category label, EffectiveSubset subset) {
    if (patches.empty()) throw Error("extract: slide '" + slide_id + "' has zero patches");
    return extract(slide_id, patches.size(), backend, label, subset);
}

std::vector<std::uint8_t> encode_embc(const EmbeddingMatrix& e) {
    check_slide_id(e.slide_id);
    constexpr auto kU32Max = std::numeric_limits<std::uint32_t>::max();
    if (e.m > kU32Max || e.d > kU32Max) throw Error("embc: dimension overflow");
    if (e.m == 0 || e.d == 0) throw Error("embc: empty embedding matrix");
    if (e.data.size() != e.m * e.d) throw Error("embc: data size does not match m*d");

    ByteWriter w;
    w.raw("EMBC");
    w.u32(kEmbcVersion);
    w.str16(e.slide_id);
    w.u8(static_cast<std::uint8_t>(e.label));
    w.u8(static_cast<std::uint8_t>(e.subset));
    w.u32(static_cast<std::uint32_t>(e.m));
    w.u32(static_cast<std::uint32_t>(e.d));
    const std::size_t payload = w.size();
    for (float v : e.data) w.f32(v);
    w.crc_since(payload);
    return w.take();
}

EmbeddingMatrix decode_embc(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic("EMBC");
    const auto version = r.u32();
    if (version != kEmbcVersion) throw FormatError("embc: version mismatch (" + std::to_string(version) + ")");
    EmbeddingMatrix e;
    e.slide_id = r.str16();
    const auto label = category_from_code(r.u8());
    const auto subset = effective_subset_from_code(r.u8());
    if (!label || !subset) throw FormatError("embc: invalid label or subset code");
    e.label = *label;
    e.subset = *subset;
    e.m = r.u32();
    e.d = r.u32();
    if (e.m == 0 || e.d == 0) throw FormatError("embc: zero dimension");
    const std::uint64_t count = static_cast<std::uint64_t>(e.m) * e.d;
    if (count > r.remaining() / 4) throw FormatError("truncated payload");
    const std::size_t payload = r.position();
    e.data.resize(count);
    for (auto& v : e.data) v = r.f32();
    r.check_crc_since(payload);
    if (r.remaining() != 0) throw FormatError("embc: trailing bytes");
    return e;
}

std::string cache_path(const std::string& dir, const std::string& slide_id) {
    return (fs::path(dir) / (slide_id + ".embc")).string();
}

std::string write_cache(const EmbeddingMatrix& e, const std::string& dir) {
    const auto bytes = encode_embc(e);
    const std::string path = cache_path(dir, e.slide_id);
    write_file_bytes(path, bytes);
    return path;
}

EmbeddingMatrix read_cache(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_embc(bytes);
    } catch (const FormatError& err) {
        throw FormatError(path + ": " + err.what());
    }
}

CacheCoverage scan_cache(const std::string& dir, const Manifest& manifest) {
    std::unordered_set<std::string> on_disk;
    std::error_code ec;
    if (fs::is_directory(dir, ec)) {
        for (const auto& entry : fs::directory_iterator(dir, ec)) {
            if (entry.is_regular_file(ec) && entry.path().extension() == ".embc") {
                on_disk.insert(entry.path().stem().string());
            }
        }
    }
    CacheCoverage report;
    std::unordered_set<std::string> known;
    for (const auto& r : manifest.records) {
        known.insert(r.file);
        (on_disk.contains(r.file) ? report.present : report.missing).push_back(r.file);
    }
    for (const auto& id : on_disk) {
        if (!known.contains(id)) report.orphaned.push_back(id);
    }
    std::sort(report.orphaned.begin(), report.orphaned.end());
    return report;
}

}  // namespace dermbench
