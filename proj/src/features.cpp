#include "mmreg/features.hpp"

#include "mmreg/error.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <string>

namespace mmreg {

namespace {

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

struct Candidate {
    double response;
    int index;
};

// Keeps pixels that no neighbor in the (2r+1)^2 window exceeds. On plateaus
// an equal neighbor suppresses only if it was itself kept earlier in raster
// order, so a flat region yields points spaced more than r apart.
std::vector<FeaturePoint> suppress_and_rank(const std::vector<double>& score, int w, int h, int radius,
                                            double min_score, int max_points) {
    std::vector<Candidate> kept;
    std::vector<std::uint8_t> taken(score.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int idx = y * w + x;
            const double s = score[idx];
            if (!(s > min_score)) continue;
            bool is_max = true;
            for (int dy = -radius; dy <= radius && is_max; ++dy) {
                const int ny = y + dy;
                if (ny < 0 || ny >= h) continue;
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int nx = x + dx;
                    if ((dx == 0 && dy == 0) || nx < 0 || nx >= w) continue;
                    const int nidx = ny * w + nx;
                    const double o = score[nidx];
                    if (o > s || (o == s && taken[nidx])) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) {
                kept.push_back({s, idx});
                taken[idx] = 1;
            }
        }
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](const Candidate& a, const Candidate& b) { return a.response > b.response; });
    if (max_points >= 0 && kept.size() > static_cast<std::size_t>(max_points)) kept.resize(max_points);
    std::vector<FeaturePoint> out;
    out.reserve(kept.size());
    for (const auto& c : kept) {
        out.push_back({(c.index % w) + 0.5, (c.index / w) + 0.5, c.response});
    }
    return out;
}

void require_gray(const Image& img) {
    if (img.channels != 1) throw Error("corner detection expects a grayscale image");
}

constexpr std::array<std::array<int, 2>, 16> kCircle{{
    {0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0}, {3, 1}, {2, 2}, {1, 3},
    {0, 3}, {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3},
}};
constexpr int kArc = 9;

}  // namespace

FeaturePoint grid_to_image(int grid_w, int grid_h, int col, int row, double source_w, double source_h) {
    if (grid_w <= 0 || grid_h <= 0) throw Error("empty feature grid");
    if (col < 0 || col >= grid_w || row < 0 || row >= grid_h) {
        throw Error("grid cell (" + std::to_string(col) + ", " + std::to_string(row) + ") out of range");
    }
    return {(col + 0.5) * (source_w / grid_w), (row + 0.5) * (source_h / grid_h), 0.0};
}

std::vector<double> harris_response(const Image& gray, double k) {
    require_gray(gray);
    const int w = gray.width;
    const int h = gray.height;
    auto px = [&](int x, int y) -> double { return gray.at(clampi(x, 0, w - 1), clampi(y, 0, h - 1)); };

    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<double> ixx(n), iyy(n), ixy(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
            const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }

    // Separable [1 2 1] / 4 smoothing, edge-clamped.
    auto smooth = [&](std::vector<double>& m) {
        std::vector<double> tmp(n);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                tmp[y * w + x] = 0.25 * m[y * w + clampi(x - 1, 0, w - 1)] + 0.5 * m[y * w + x] +
                                 0.25 * m[y * w + clampi(x + 1, 0, w - 1)];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                m[y * w + x] = 0.25 * tmp[clampi(y - 1, 0, h - 1) * w + x] + 0.5 * tmp[y * w + x] +
                               0.25 * tmp[clampi(y + 1, 0, h - 1) * w + x];
    };
    smooth(ixx);
    smooth(iyy);
    smooth(ixy);

    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double det = ixx[i] * iyy[i] - ixy[i] * ixy[i];
        const double tr = ixx[i] + iyy[i];
        r[i] = det - k * tr * tr;
    }
    return r;
}

std::vector<FeaturePoint> detect_harris(const Image& gray, double k, int window, int max_points) {
    require_gray(gray);
    if (!(k > 0.0 && k < 0.25)) throw Error("Harris k must lie in (0, 0.25)");
    if (window < 1) throw Error("Harris window must be at least 1");
    if (max_points < 0) throw Error("max_points must be nonnegative");
    const auto r = harris_response(gray, k);
    // Responses below this are rounding noise on flat regions.
    const double max_r = *std::max_element(r.begin(), r.end());
    const double floor = std::max(0.0, max_r * 1e-9);
    return suppress_and_rank(r, gray.width, gray.height, window, floor, max_points);
}

int fast_score(const Image& gray, int x, int y) {
    const int center = gray.at(x, y);
    std::array<int, 16> diff{};
    for (std::size_t i = 0; i < 16; ++i) diff[i] = gray.at(x + kCircle[i][0], y + kCircle[i][1]) - center;
    int best = 0;
    for (int start = 0; start < 16; ++start) {
        int bright = 255;
        int dark = 255;
        for (int j = 0; j < kArc; ++j) {
            const int d = diff[(start + j) % 16];
            bright = std::min(bright, d);
            dark = std::min(dark, -d);
        }
        best = std::max({best, bright, dark});
    }
    // Corner at threshold t iff some arc clears it strictly.
    return best - 1;
}

std::vector<FeaturePoint> detect_fast(const Image& gray, int intensity_threshold, int max_points) {
    require_gray(gray);
    if (intensity_threshold < 0 || intensity_threshold > 255) throw Error("FAST threshold must lie in [0, 255]");
    if (max_points < 0) throw Error("max_points must be nonnegative");
    const int w = gray.width;
    const int h = gray.height;
    std::vector<double> score(static_cast<std::size_t>(w) * h, -1.0);
    for (int y = 3; y < h - 3; ++y) {
        for (int x = 3; x < w - 3; ++x) {
            const int s = fast_score(gray, x, y);
            if (s >= intensity_threshold) score[static_cast<std::size_t>(y) * w + x] = s;
        }
    }
    // A score of 0 is a valid corner at threshold 0.
    return suppress_and_rank(score, w, h, 1, -0.5, max_points);
}

Eigen::MatrixXd patch_descriptors(const Image& gray, const std::vector<FeaturePoint>& points, int radius) {
    require_gray(gray);
    if (radius < 0) throw Error("patch radius must be nonnegative");
    const int side = 2 * radius + 1;
    Eigen::MatrixXd desc(side * side, static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        const int cx = static_cast<int>(std::floor(points[i].x));
        const int cy = static_cast<int>(std::floor(points[i].y));
        Eigen::Index k = 0;
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx)
                desc(k++, static_cast<Eigen::Index>(i)) =
                    gray.at(clampi(cx + dx, 0, gray.width - 1), clampi(cy + dy, 0, gray.height - 1));
        auto col = desc.col(static_cast<Eigen::Index>(i));
        col.array() -= col.mean();
        const double norm = col.norm();
        if (norm > 0) {
            col /= norm;
        }
    }
    return desc;
}

}  // namespace mmreg
