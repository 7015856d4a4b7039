#include "dermbench/patchworks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dermbench {

std::size_t tile_count(std::size_t width, std::size_t height, std::size_t tile_size, std::size_t stride) {
    if (tile_size == 0) throw Error("tile: tile_size must be >= 1");
    if (stride == 0) stride = tile_size;
    if (width < tile_size || height < tile_size) return 0;
    return ((width - tile_size) / stride + 1) * ((height - tile_size) / stride + 1);
}

double mean_luminance(const PatchImage& image) {
    if (image.empty()) return 0.0;
    double sum = 0.0;
    const std::size_t n = image.width * image.height;
    for (std::size_t i = 0; i < n; ++i) {
        const float* px = &image.data[i * 3];
        sum += 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    }
    return sum / static_cast<double>(n);
}

std::vector<PatchImage> tile(const PatchImage& image, std::size_t tile_size, std::size_t stride,
                             BackgroundPolicy background) {
    if (tile_size == 0) throw Error("tile: tile_size must be >= 1");
    if (stride == 0) stride = tile_size;
    std::vector<PatchImage> tiles;
    if (image.width < tile_size || image.height < tile_size) {
        warn("tile: image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
             " is smaller than tile size " + std::to_string(tile_size));
        return tiles;
    }
    for (std::size_t y0 = 0; y0 + tile_size <= image.height; y0 += stride) {
        for (std::size_t x0 = 0; x0 + tile_size <= image.width; x0 += stride) {
            PatchImage t(tile_size, tile_size);
            for (std::size_t y = 0; y < tile_size; ++y) {
                const float* src = &image.data[((y0 + y) * image.width + x0) * 3];
                std::copy(src, src + tile_size * 3, &t.data[y * tile_size * 3]);
            }
            if (background.enabled && mean_luminance(t) > background.max_mean_luminance) continue;
            tiles.push_back(std::move(t));
        }
    }
    return tiles;
}

namespace {

// Bilinear sample at continuous pixel coordinates (pixel centers at integers),
// replicating the border.
float sample_bilinear(const PatchImage& img, double x, double y, std::size_t c) {
    const double max_x = static_cast<double>(img.width - 1);
    const double max_y = static_cast<double>(img.height - 1);
    x = std::clamp(x, 0.0, max_x);
    y = std::clamp(y, 0.0, max_y);
    const auto x0 = static_cast<std::size_t>(std::floor(x));
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t x1 = std::min(x0 + 1, img.width - 1);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double fx = x - static_cast<double>(x0);
    const double fy = y - static_cast<double>(y0);
    const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
    const double bottom = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
    return static_cast<float>((1.0 - fy) * top + fy * bottom);
}

}  // namespace

PatchImage resize(const PatchImage& patch, std::size_t out_width, std::size_t out_height) {
    if (patch.empty()) throw Error("resize: empty input");
    if (out_width == 0 || out_height == 0) throw Error("resize: empty output size");
    PatchImage out(out_width, out_height);
    const double sx = static_cast<double>(patch.width) / static_cast<double>(out_width);
    const double sy = static_cast<double>(patch.height) / static_cast<double>(out_height);
    for (std::size_t y = 0; y < out_height; ++y) {
        const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
        for (std::size_t x = 0; x < out_width; ++x) {
            const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
            for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = sample_bilinear(patch, src_x, src_y, c);
        }
    }
    return out;
}

NormalizedPatch normalize(const PatchImage& patch, const NormalizationParams& params) {
    for (double s : params.stddev) {
        if (!(s > 0.0)) throw Error("normalize: standard deviations must be positive");
    }
    if (patch.width != kModelInputSize || patch.height != kModelInputSize) {
        throw Error("normalize: expected a 224x224 patch, got " + std::to_string(patch.width) + "x" +
                    std::to_string(patch.height));
    }
    NormalizedPatch out;
    out.values_.resize(patch.data.size());
    const std::array<double, 3> inv{1.0 / params.stddev[0], 1.0 / params.stddev[1], 1.0 / params.stddev[2]};
    for (std::size_t i = 0; i < patch.data.size(); i += 3) {
        for (std::size_t c = 0; c < 3; ++c) {
            out.values_[i + c] = static_cast<float>((static_cast<double>(patch.data[i + c]) - params.mean[c]) * inv[c]);
        }
    }
    return out;
}

PatchImage denormalize(const NormalizedPatch& patch, const NormalizationParams& params) {
    PatchImage out(NormalizedPatch::kSide, NormalizedPatch::kSide);
    for (std::size_t i = 0; i < out.data.size(); i += 3) {
        for (std::size_t c = 0; c < 3; ++c) {
            out.data[i + c] = static_cast<float>(patch.values_[i + c] * params.stddev[c] + params.mean[c]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Augmentation

namespace {

void check_kernel(int k, const char* name) {
    if (k < 1 || k % 2 == 0) throw Error(std::string(name) + ": kernel size must be odd and >= 1, got " + std::to_string(k));
}

void check_probability(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string(name) + ": probability must be in [0, 1]");
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

PatchImage flip(const PatchImage& in, bool horizontal) {
    PatchImage out(in.width, in.height);
    for (std::size_t y = 0; y < in.height; ++y) {
        for (std::size_t x = 0; x < in.width; ++x) {
            const std::size_t sx = horizontal ? in.width - 1 - x : x;
            const std::size_t sy = horizontal ? y : in.height - 1 - y;
            for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = in.at(sx, sy, c);
        }
    }
    return out;
}

std::size_t clamp_index(long long v, std::size_t n) {
    if (v < 0) return 0;
    if (v >= static_cast<long long>(n)) return n - 1;
    return static_cast<std::size_t>(v);
}

// Separable or direction-line kernels share this helper: sum of weighted taps
// at integer offsets with replicated borders.
struct Tap {
    int dx;
    int dy;
    double w;
};

PatchImage convolve(const PatchImage& in, const std::vector<Tap>& taps) {
    PatchImage out(in.width, in.height);
    for (std::size_t y = 0; y < in.height; ++y) {
        for (std::size_t x = 0; x < in.width; ++x) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (const auto& t : taps) {
                const std::size_t sx = clamp_index(static_cast<long long>(x) + t.dx, in.width);
                const std::size_t sy = clamp_index(static_cast<long long>(y) + t.dy, in.height);
                for (std::size_t c = 0; c < 3; ++c) acc[c] += t.w * in.at(sx, sy, c);
            }
            for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<float>(acc[c]);
        }
    }
    return out;
}

PatchImage gaussian_blur(const PatchImage& in, int k, double sigma) {
    if (k == 1) return in;
    const int r = k / 2;
    std::vector<double> w(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        const double v = sigma > 0.0 ? std::exp(-0.5 * (i * i) / (sigma * sigma)) : (i == 0 ? 1.0 : 0.0);
        w[static_cast<std::size_t>(i + r)] = v;
        sum += v;
    }
    std::vector<Tap> horizontal, vertical;
    for (int i = -r; i <= r; ++i) {
        horizontal.push_back({i, 0, w[static_cast<std::size_t>(i + r)] / sum});
        vertical.push_back({0, i, w[static_cast<std::size_t>(i + r)] / sum});
    }
    return convolve(convolve(in, horizontal), vertical);
}

PatchImage motion_blur(const PatchImage& in, int k, Rng& rng) {
    const auto direction = rng.below(4);
    if (k == 1) return in;
    static constexpr int kDirs[4][2] = {{1, 0}, {1, 1}, {0, 1}, {1, -1}};
    const int r = k / 2;
    std::vector<Tap> taps;
    for (int i = -r; i <= r; ++i) taps.push_back({i * kDirs[direction][0], i * kDirs[direction][1], 1.0 / k});
    return convolve(in, taps);
}

PatchImage median_blur(const PatchImage& in, int k) {
    if (k == 1) return in;
    const int r = k / 2;
    PatchImage out(in.width, in.height);
    std::vector<float> window(static_cast<std::size_t>(k * k));
    for (std::size_t y = 0; y < in.height; ++y) {
        for (std::size_t x = 0; x < in.width; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                std::size_t n = 0;
                for (int dy = -r; dy <= r; ++dy) {
                    for (int dx = -r; dx <= r; ++dx) {
                        window[n++] = in.at(clamp_index(static_cast<long long>(x) + dx, in.width),
                                            clamp_index(static_cast<long long>(y) + dy, in.height), c);
                    }
                }
                auto mid = window.begin() + static_cast<std::ptrdiff_t>(n / 2);
                std::nth_element(window.begin(), mid, window.end());
                out.at(x, y, c) = *mid;
            }
        }
    }
    return out;
}

PatchImage affine(const PatchImage& in, const aug::Affine& a, Rng& rng) {
    double tx = a.translate_x, ty = a.translate_y, scale = a.scale, deg = a.rotate_deg;
    if (a.jitter) {
        tx = rng.uniform(-std::abs(tx), std::abs(tx));
        ty = rng.uniform(-std::abs(ty), std::abs(ty));
        const double ds = std::abs(scale - 1.0);
        scale = rng.uniform(1.0 - ds, 1.0 + ds);
        deg = rng.uniform(-std::abs(deg), std::abs(deg));
    }
    if (!(scale > 0.0)) throw Error("affine: scale must be positive");
    const double theta = deg * std::numbers::pi / 180.0;
    const double cos_t = std::cos(theta), sin_t = std::sin(theta);
    const double cx = static_cast<double>(in.width) / 2.0;
    const double cy = static_cast<double>(in.height) / 2.0;
    const double shift_x = tx * static_cast<double>(in.width);
    const double shift_y = ty * static_cast<double>(in.height);

    PatchImage out(in.width, in.height);
    for (std::size_t y = 0; y < in.height; ++y) {
        for (std::size_t x = 0; x < in.width; ++x) {
            // Inverse map: destination pixel center back to source coordinates.
            const double u = static_cast<double>(x) + 0.5 - cx - shift_x;
            const double v = static_cast<double>(y) + 0.5 - cy - shift_y;
            const double sx = (cos_t * u + sin_t * v) / scale + cx - 0.5;
            const double sy = (-sin_t * u + cos_t * v) / scale + cy - 0.5;
            for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = sample_bilinear(in, sx, sy, c);
        }
    }
    return out;
}

struct Applier {
    Rng& rng;
    PatchImage& img;

    void operator()(const aug::HorizontalFlip& t) {
        if (rng.uniform() < t.p) img = flip(img, true);
    }
    void operator()(const aug::VerticalFlip& t) {
        if (rng.uniform() < t.p) img = flip(img, false);
    }
    void operator()(const aug::GaussianNoise& t) {
        if (t.sigma == 0.0) return;
        for (auto& v : img.data) v = clamp01(v + t.sigma * rng.normal());
    }
    void operator()(const aug::MotionBlur& t) { img = motion_blur(img, t.k, rng); }
    void operator()(const aug::MedianBlur& t) { img = median_blur(img, t.k); }
    void operator()(const aug::GaussianBlur& t) { img = gaussian_blur(img, t.k, t.sigma); }
    void operator()(const aug::Affine& t) { img = affine(img, t, rng); }
    void operator()(const aug::BrightnessContrast& t) {
        const double b = rng.uniform(-t.brightness, t.brightness);
        const double c = rng.uniform(-t.contrast, t.contrast);
        if (b == 0.0 && c == 0.0) return;
        for (auto& v : img.data) v = clamp01((1.0 + c) * v + b);
    }
};

struct Validator {
    void operator()(const aug::HorizontalFlip& t) const { check_probability(t.p, "hflip"); }
    void operator()(const aug::VerticalFlip& t) const { check_probability(t.p, "vflip"); }
    void operator()(const aug::GaussianNoise& t) const {
        if (!(t.sigma >= 0.0)) throw Error("gaussian_noise: sigma must be >= 0");
    }
    void operator()(const aug::MotionBlur& t) const { check_kernel(t.k, "motion_blur"); }
    void operator()(const aug::MedianBlur& t) const { check_kernel(t.k, "median_blur"); }
    void operator()(const aug::GaussianBlur& t) const {
        check_kernel(t.k, "gaussian_blur");
        if (!(t.sigma >= 0.0)) throw Error("gaussian_blur: sigma must be >= 0");
    }
    void operator()(const aug::Affine& t) const {
        if (!(t.scale > 0.0)) throw Error("affine: scale must be positive");
        if (t.jitter && std::abs(t.scale - 1.0) >= 1.0) throw Error("affine: scale jitter must stay below 1");
    }
    void operator()(const aug::BrightnessContrast& t) const {
        if (!(t.brightness >= 0.0 && t.contrast >= 0.0)) throw Error("brightness_contrast: magnitudes must be >= 0");
    }
};

}  // namespace

void validate(const AugmentationSpec& spec) {
    for (const auto& t : spec.transforms) std::visit(Validator{}, t);
}

PatchImage augment(const PatchImage& patch, const AugmentationSpec& spec) {
    validate(spec);
    if (patch.empty()) throw Error("augment: empty patch");
    Rng rng(spec.seed);
    PatchImage img = patch;
    Applier apply{rng, img};
    for (const auto& t : spec.transforms) std::visit(apply, t);
    return img;
}

AugmentationSpec default_augmentation(std::uint64_t seed) {
    AugmentationSpec spec;
    spec.seed = seed;
    spec.transforms = {
        aug::HorizontalFlip{0.5},
        aug::VerticalFlip{0.5},
        aug::Affine{0.05, 0.05, 1.1, 15.0, true},
        aug::BrightnessContrast{0.1, 0.1},
        aug::GaussianBlur{3, 0.8},
        aug::GaussianNoise{0.01},
    };
    return spec;
}

}  // namespace dermbench
