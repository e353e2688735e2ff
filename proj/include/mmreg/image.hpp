#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

namespace mmreg {

/// 8-bit raster, 1 (gray) or 3 (RGB) interleaved channels, row-major.
///
/// Continuous image coordinates place the center of pixel (c, r) at
/// (c + 0.5, r + 0.5); the image covers [0, width) x [0, height).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0);
    Image(int w, int h, int c, std::vector<std::uint8_t> data);

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    std::uint8_t at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }
    std::uint8_t& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }

    bool empty() const { return width == 0 || height == 0; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Foreground mask; `mask[y * width + x]` is nonzero for foreground.
struct BinaryImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> mask;

    BinaryImage() = default;
    BinaryImage(int w, int h) : width(w), height(h), mask(static_cast<std::size_t>(w) * h, 0) {}

    bool at(int x, int y) const { return mask[static_cast<std::size_t>(y) * width + x] != 0; }
    std::size_t foreground_count() const;

    /// {0, 255} grayscale rendering used for PNG output and metrics.
    Image to_image() const;

    friend bool operator==(const BinaryImage&, const BinaryImage&) = default;
};

struct OtsuThreshold {};
struct FixedThreshold {
    int value = 128;
};
using ThresholdMethod = std::variant<OtsuThreshold, FixedThreshold>;

/// Reads an 8-bit PNG (gray or color; alpha dropped) or a binary PGM (P5).
Image load_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG with the image's channel count.
void save_png(const Image& img, const std::filesystem::path& path);

/// BT.601 luma: round(0.2989 R + 0.5870 G + 0.1140 B). Gray input is returned as is.
Image to_grayscale(const Image& img);

/// Edge-clamped bilinear resampling with pixel-center alignment.
Image resize_bilinear(const Image& img, int out_w, int out_h);

/// Otsu threshold over `hist` (256 bins): the t in [0, 254] maximizing the
/// between-class variance of {<= t} vs {> t}, lowest t on ties.
/// Throws on a histogram whose best variance is zero.
int otsu_threshold(std::span<const std::uint64_t> hist);

/// Foreground is strictly above the threshold.
BinaryImage binarize(const Image& gray, const ThresholdMethod& method);

/// Drops 8-connected components with fewer than `min_area` pixels.
BinaryImage remove_small_components(const BinaryImage& bin, int min_area);

/// 8-connected component labels (0 = background, 1..n in raster order of first pixel).
std::vector<int> label_components(const BinaryImage& bin, int* count = nullptr);

}  // namespace mmreg
