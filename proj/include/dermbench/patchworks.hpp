#pragma once

// Patch preprocessing: tiling, bilinear resize, train-time augmentation and
// per-channel normalization.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "dermbench/core.hpp"

namespace dermbench {

/// Interleaved RGB, row-major, intensities in [0, 1].
struct PatchImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> data;

    static constexpr std::size_t kChannels = 3;

    PatchImage() = default;
    PatchImage(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), data(w * h * kChannels, fill) {}

    float& at(std::size_t x, std::size_t y, std::size_t c) { return data[(y * width + x) * kChannels + c]; }
    float at(std::size_t x, std::size_t y, std::size_t c) const { return data[(y * width + x) * kChannels + c]; }
    bool empty() const { return width == 0 || height == 0; }

    /// From 8-bit interleaved RGB (value / 255).
    static PatchImage from_rgb8(std::size_t w, std::size_t h, const std::vector<std::uint8_t>& rgb);

    bool operator==(const PatchImage&) const = default;
};

inline constexpr std::size_t kModelInputSize = 224;
inline constexpr std::size_t kDefaultTileSize = 512;

struct NormalizationParams {
    std::array<double, 3> mean{0.485, 0.456, 0.406};
    std::array<double, 3> stddev{0.229, 0.224, 0.225};
};

/// Output of normalize(): a fixed 224x224x3 array.
class NormalizedPatch {
public:
    static constexpr std::size_t kSide = kModelInputSize;

    const std::vector<float>& values() const { return values_; }
    float at(std::size_t x, std::size_t y, std::size_t c) const { return values_[(y * kSide + x) * 3 + c]; }

private:
    friend NormalizedPatch normalize(const PatchImage&, const NormalizationParams&);
    friend PatchImage denormalize(const NormalizedPatch&, const NormalizationParams&);
    std::vector<float> values_;
};

struct BackgroundPolicy {
    bool enabled = false;
    /// Tiles whose mean luminance exceeds this are treated as bare glass.
    double max_mean_luminance = 0.92;
};

std::vector<PatchImage> tile(const PatchImage& image, std::size_t tile_size = kDefaultTileSize,
                             std::size_t stride = 0, BackgroundPolicy background = {});

/// Grid count before background filtering.
std::size_t tile_count(std::size_t width, std::size_t height, std::size_t tile_size, std::size_t stride);

double mean_luminance(const PatchImage& image);

/// Bilinear with half-pixel centers and edge clamping.
PatchImage resize(const PatchImage& patch, std::size_t out_width = kModelInputSize,
                  std::size_t out_height = kModelInputSize);

NormalizedPatch normalize(const PatchImage& patch, const NormalizationParams& params = {});
PatchImage denormalize(const NormalizedPatch& patch, const NormalizationParams& params = {});

// Augmentation transforms. Magnitudes are upper bounds of the random draw
// unless noted.
namespace aug {
struct HorizontalFlip { double p = 0.5; };
struct VerticalFlip { double p = 0.5; };
struct GaussianNoise { double sigma = 0.02; };
/// Line kernel of length k in a random direction (0, 45, 90 or 135 degrees).
struct MotionBlur { int k = 5; };
struct MedianBlur { int k = 3; };
struct GaussianBlur { int k = 5; double sigma = 1.0; };
/// When `jitter` is false the parameters are applied as given; otherwise each is
/// drawn uniformly from [-|v|, |v|] (scale from [1-|s-1|, 1+|s-1|]).
struct Affine {
    double translate_x = 0.0;  // fraction of width
    double translate_y = 0.0;  // fraction of height
    double scale = 1.0;
    double rotate_deg = 0.0;
    bool jitter = false;
};
/// out = (1 + c) * x + b with b ~ U(-brightness, brightness), c ~ U(-contrast, contrast).
struct BrightnessContrast { double brightness = 0.1; double contrast = 0.1; };
}  // namespace aug

using Transform = std::variant<aug::HorizontalFlip, aug::VerticalFlip, aug::GaussianNoise, aug::MotionBlur,
                               aug::MedianBlur, aug::GaussianBlur, aug::Affine, aug::BrightnessContrast>;

struct AugmentationSpec {
    std::vector<Transform> transforms;
    std::uint64_t seed = 0;
};

/// Throws Error when a kernel size is even or < 1, or a probability is outside [0, 1].
void validate(const AugmentationSpec& spec);

/// Applies the transforms in order. Bit-deterministic for a given seed.
PatchImage augment(const PatchImage& patch, const AugmentationSpec& spec);

/// A moderate default mix covering every transform kind.
AugmentationSpec default_augmentation(std::uint64_t seed);

// 8-bit RGB raster I/O (binary/ASCII PPM and PNG).
PatchImage read_image(const std::string& path);
void write_ppm(const PatchImage& image, const std::string& path);

}  // namespace dermbench
