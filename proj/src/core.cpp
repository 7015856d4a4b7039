#include "dermbench/core.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numbers>
#include <sstream>

namespace dermbench {

std::string_view to_string(Category c) {
    switch (c) {
        case Category::Basaloid: return "basaloid";
        case Category::Melanocytic: return "melanocytic";
        case Category::Squamous: return "squamous";
        case Category::Other: return "other";
    }
    return "?";
}

std::string_view to_string(Subset s) {
    switch (s) {
        case Subset::Train: return "train";
        case Subset::Validation: return "validation";
        case Subset::Test: return "test";
    }
    return "?";
}

std::string_view to_string(EffectiveSubset s) {
    return s == EffectiveSubset::Train ? "train" : "test";
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return out;
}

std::string_view trim(std::string_view s) {
    const auto is_space = [](unsigned char ch) { return std::isspace(ch) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::optional<Category> parse_category(std::string_view text) {
    const std::string key = lowercase(trim(text));
    if (key == "basaloid") return Category::Basaloid;
    if (key == "melanocytic") return Category::Melanocytic;
    if (key == "squamous") return Category::Squamous;
    if (key == "other") return Category::Other;
    return std::nullopt;
}

std::optional<Subset> parse_subset(std::string_view text) {
    const std::string key = lowercase(trim(text));
    if (key == "train" || key == "training") return Subset::Train;
    if (key == "validation" || key == "valid" || key == "val") return Subset::Validation;
    if (key == "test" || key == "testing") return Subset::Test;
    return std::nullopt;
}

std::optional<Category> category_from_code(std::uint8_t code) {
    if (code > 3) return std::nullopt;
    return static_cast<Category>(code);
}

std::optional<EffectiveSubset> effective_subset_from_code(std::uint8_t code) {
    if (code > 1) return std::nullopt;
    return static_cast<EffectiveSubset>(code);
}

// ---------------------------------------------------------------------------
// Rng: xoshiro256** seeded through splitmix64.

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
    // FNV-1a over the label, then mixed with seed and index.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : label) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(seed ^ h) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
        s = splitmix64(s);
        word = s;
    }
}

std::uint64_t Rng::next() {
    const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = std::rotl(state_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw Error("Rng::below: empty range");
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t x;
    do {
        x = next();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (spare_normal_) {
        const double v = *spare_normal_;
        spare_normal_.reset();
        return v;
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_normal_ = r * std::sin(theta);
    return r * std::cos(theta);
}

double Rng::gamma(double shape) {
    if (!(shape > 0.0)) throw Error("Rng::gamma: shape must be positive");
    if (shape < 1.0) {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

// ---------------------------------------------------------------------------

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in chunks.
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
        crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void ByteWriter::u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str16(std::string_view s) {
    if (s.size() > 0xffff) throw Error("string too long for u16 length prefix");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
}

void ByteWriter::crc_since(std::size_t from) {
    const auto crc = crc32(std::span(buf_).subspan(from));
    u32(crc);
}

void ByteReader::need(std::size_t n) const {
    if (n > remaining()) throw FormatError("truncated payload");
}

std::uint8_t ByteReader::u8() {
    need(1);
    return bytes_[pos_++];
}
std::uint16_t ByteReader::u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(bytes_[pos_++]) << (8 * i);
    return v;
}
std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
}
std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
}
float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str16() {
    const auto n = u16();
    const auto b = take(n);
    return std::string(b.begin(), b.end());
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
}

void ByteReader::expect_magic(std::string_view magic) {
    if (remaining() < magic.size()) throw FormatError("bad magic");
    const auto b = take(magic.size());
    if (!std::equal(b.begin(), b.end(), magic.begin())) throw FormatError("bad magic");
}

void ByteReader::check_crc_since(std::size_t from) {
    const std::size_t end = pos_;
    const auto expected = crc32(bytes_.subspan(from, end - from));
    const auto stored = u32();
    if (stored != expected) throw FormatError("CRC mismatch");
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

void write_text_file(const std::string& path, std::string_view text) {
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {
std::mutex g_warn_mutex;
WarningSink g_warn_sink;
}  // namespace

void set_warning_sink(WarningSink sink) {
    std::lock_guard lock(g_warn_mutex);
    g_warn_sink = std::move(sink);
}

void warn(std::string_view message) {
    std::lock_guard lock(g_warn_mutex);
    if (g_warn_sink) {
        g_warn_sink(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

}  // namespace dermbench
