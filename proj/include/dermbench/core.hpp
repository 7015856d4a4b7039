#pragma once

// Shared vocabulary: label/subset enums, the error type, a small dense matrix,
// a portable RNG, and little-endian binary helpers used by every file format.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dermbench {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by binary readers on bad magic, version, truncation or CRC mismatch.
class FormatError : public Error {
public:
    using Error::Error;
};

// Codes are part of the on-disk formats; do not renumber.
enum class Category : std::uint8_t { Basaloid = 0, Melanocytic = 1, Squamous = 2, Other = 3 };
enum class Subset : std::uint8_t { Train = 0, Validation = 1, Test = 2 };
enum class EffectiveSubset : std::uint8_t { Train = 0, Test = 1 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<Category, kNumClasses> kClassOrder{
    Category::Basaloid, Category::Melanocytic, Category::Squamous};

std::string_view to_string(Category c);
std::string_view to_string(Subset s);
std::string_view to_string(EffectiveSubset s);

/// Case-insensitive, whitespace-trimmed. Unknown strings yield nullopt.
std::optional<Category> parse_category(std::string_view text);
std::optional<Subset> parse_subset(std::string_view text);

std::optional<Category> category_from_code(std::uint8_t code);
std::optional<EffectiveSubset> effective_subset_from_code(std::uint8_t code);

constexpr EffectiveSubset effective(Subset s) {
    return s == Subset::Train ? EffectiveSubset::Train : EffectiveSubset::Test;
}

constexpr std::size_t class_index(Category c) { return static_cast<std::size_t>(c); }

/// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

/// Deterministic, platform-independent random stream (xoshiro256**). The
/// standard library's distributions are implementation-defined, so sampling
/// is done here to keep outputs identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal();
    /// Gamma(shape, 1) via Marsaglia-Tsang.
    double gamma(double shape);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::uint64_t state_[4];
    std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t x);
/// Mixes a base seed with a label and index into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Append-only little-endian encoder.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    /// u16 length prefix + UTF-8 bytes.
    void str16(std::string_view s);
    /// u32 CRC-32 of everything from `from` to the current end.
    void crc_since(std::size_t from);

    std::size_t size() const { return buf_.size(); }
    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian decoder; every overrun throws FormatError.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    std::string str16();
    std::span<const std::uint8_t> take(std::size_t n);
    void expect_magic(std::string_view magic);
    /// Reads a u32 CRC and checks it against bytes [from, position before the CRC).
    void check_crc_since(std::size_t from);

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const;

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
/// Writes through a temporary file and renames, so readers never see a partial file.
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::string& path, std::string_view text);
std::string read_text_file(const std::string& path);

/// Warnings are routed through a replaceable sink (stderr by default).
using WarningSink = std::function<void(std::string_view)>;
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

std::string lowercase(std::string_view s);
std::string_view trim(std::string_view s);

}  // namespace dermbench
