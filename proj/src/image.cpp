#include "mmreg/image.hpp"

#include "mmreg/error.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace mmreg {

namespace {

constexpr const char* kCorrupt = "unsupported or corrupt image";

std::uint8_t clamp_round(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Binary PGM (P5) with maxval <= 255. Header tokens may be separated by any
// whitespace and interleaved with '#' comments.
Image decode_pgm(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 2;
    auto next_token = [&]() -> long {
        for (;;) {
            while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        long v = 0;
        std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > (1L << 30)) throw Error(kCorrupt);
            ++pos;
        }
        if (pos == start) throw Error(kCorrupt);
        return v;
    };
    const long w = next_token();
    const long h = next_token();
    const long maxval = next_token();
    if (w <= 0 || h <= 0) throw Error("zero-dimension image");
    if (maxval <= 0 || maxval > 255) throw Error(kCorrupt);
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error(kCorrupt);
    ++pos;
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (bytes.size() - pos < n) throw Error(kCorrupt);
    std::vector<std::uint8_t> data(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    return Image(static_cast<int>(w), static_cast<int>(h), 1, std::move(data));
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        throw Error(kCorrupt);
    }
    if (png.width == 0 || png.height == 0) {
        png_image_free(&png);
        throw Error("zero-dimension image");
    }
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int channels = color ? 3 : 1;
    Image img(static_cast<int>(png.width), static_cast<int>(png.height), channels);
    // A zero background pointer composes alpha over black rather than failing.
    if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
        png_image_free(&png);
        throw Error(kCorrupt);
    }
    return img;
}

}  // namespace

Image::Image(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c),
      pixels(static_cast<std::size_t>(w) * h * c, fill) {
    if (c != 1 && c != 3) throw Error("image channels must be 1 or 3");
}

Image::Image(int w, int h, int c, std::vector<std::uint8_t> data)
    : width(w), height(h), channels(c), pixels(std::move(data)) {
    if (c != 1 && c != 3) throw Error("image channels must be 1 or 3");
    if (pixels.size() != static_cast<std::size_t>(w) * h * c) {
        throw Error("pixel buffer size does not match dimensions");
    }
}

std::size_t BinaryImage::foreground_count() const {
    return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(),
                                                  [](std::uint8_t v) { return v != 0; }));
}

Image BinaryImage::to_image() const {
    Image img(width, height, 1);
    for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask[i] ? 255 : 0;
    return img;
}

Image load_image(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    static constexpr std::array<std::uint8_t, 8> kPngSig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::equal(kPngSig.begin(), kPngSig.end(), bytes.begin())) {
        return decode_png(bytes);
    }
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
        return decode_pgm(bytes);
    }
    throw Error(kCorrupt);
}

void save_png(const Image& img, const std::filesystem::path& path) {
    if (img.empty()) throw Error("cannot write an empty image");
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, img.pixels.data(), 0, nullptr)) {
        std::string msg = "cannot write " + path.string() + ": " + png.message;
        png_image_free(&png);
        throw Error(msg);
    }
}

Image to_grayscale(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.width, img.height, 1);
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = img.pixels[3 * i];
        const double g = img.pixels[3 * i + 1];
        const double b = img.pixels[3 * i + 2];
        out.pixels[i] = clamp_round(0.2989 * r + 0.5870 * g + 0.1140 * b);
    }
    return out;
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw Error("zero target dimension");
    if (img.empty()) throw Error("cannot resize an empty image");
    if (out_w == img.width && out_h == img.height) return img;

    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;
    Image out(out_w, out_h, img.channels);
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < img.channels; ++c) {
                const double top = (1 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
                const double bot = (1 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
                out.at(x, y, c) = clamp_round((1 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

int otsu_threshold(std::span<const std::uint64_t> hist) {
    if (hist.size() != 256) throw Error("histogram must have 256 bins");
    std::uint64_t total = 0;
    std::uint64_t sum = 0;
    for (int i = 0; i < 256; ++i) {
        total += hist[i];
        sum += static_cast<std::uint64_t>(i) * hist[i];
    }
    // sigma_B^2 * N^2 = (N * s0 - n0 * S)^2 / (n0 * n1); the numerator
    // difference is formed exactly in integers.
    long double best = 0;
    int best_t = -1;
    std::uint64_t n0 = 0;
    std::uint64_t s0 = 0;
    for (int t = 0; t < 255; ++t) {
        n0 += hist[t];
        s0 += static_cast<std::uint64_t>(t) * hist[t];
        const std::uint64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;
        const __int128 diff = static_cast<__int128>(total) * s0 - static_cast<__int128>(n0) * sum;
        const long double d = static_cast<long double>(diff);
        const long double v = d * d / (static_cast<long double>(n0) * static_cast<long double>(n1));
        if (v > best) {
            best = v;
            best_t = t;
        }
    }
    if (best_t < 0) throw Error("degenerate histogram");
    return best_t;
}

BinaryImage binarize(const Image& gray, const ThresholdMethod& method) {
    if (gray.channels != 1) throw Error("binarize expects a grayscale image");
    int threshold = 0;
    if (std::holds_alternative<OtsuThreshold>(method)) {
        std::array<std::uint64_t, 256> hist{};
        for (auto v : gray.pixels) ++hist[v];
        threshold = otsu_threshold(hist);
    } else {
        threshold = std::get<FixedThreshold>(method).value;
    }
    BinaryImage out(gray.width, gray.height);
    std::size_t count = 0;
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
        if (gray.pixels[i] > threshold) {
            out.mask[i] = 1;
            ++count;
        }
    }
    if (count == 0) throw Error("empty foreground");
    return out;
}

std::vector<int> label_components(const BinaryImage& bin, int* count) {
    std::vector<int> labels(bin.mask.size(), 0);
    std::vector<int> stack;
    int next = 0;
    for (int y = 0; y < bin.height; ++y) {
        for (int x = 0; x < bin.width; ++x) {
            const int seed = y * bin.width + x;
            if (!bin.mask[seed] || labels[seed]) continue;
            ++next;
            labels[seed] = next;
            stack.push_back(seed);
            while (!stack.empty()) {
                const int p = stack.back();
                stack.pop_back();
                const int px = p % bin.width;
                const int py = p / bin.width;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = px + dx;
                        const int ny = py + dy;
                        if (nx < 0 || ny < 0 || nx >= bin.width || ny >= bin.height) continue;
                        const int q = ny * bin.width + nx;
                        if (bin.mask[q] && !labels[q]) {
                            labels[q] = next;
                            stack.push_back(q);
                        }
                    }
                }
            }
        }
    }
    if (count) *count = next;
    return labels;
}

BinaryImage remove_small_components(const BinaryImage& bin, int min_area) {
    if (min_area < 0) throw Error("min_area must be nonnegative");
    BinaryImage out = bin;
    if (min_area > 0) {
        int n = 0;
        const auto labels = label_components(bin, &n);
        std::vector<std::size_t> area(static_cast<std::size_t>(n) + 1, 0);
        for (int l : labels) ++area[static_cast<std::size_t>(l)];
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] && area[static_cast<std::size_t>(labels[i])] < static_cast<std::size_t>(min_area)) {
                out.mask[i] = 0;
            }
        }
    }
    if (out.foreground_count() == 0) throw Error("empty foreground");
    return out;
}

}  // namespace mmreg
