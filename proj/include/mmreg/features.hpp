#pragma once

#include "mmreg/image.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace mmreg {

/// One scale of a feature tensor. `values` is channels x (grid_h * grid_w);
/// column index enumerates grid cells row-major.
template <typename Scalar>
struct FeatureMap {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    std::uint32_t scale_id = 0;
    int grid_h = 0;
    int grid_w = 0;
    Matrix values;

    FeatureMap() = default;
    FeatureMap(std::uint32_t id, int channels, int h, int w)
        : scale_id(id), grid_h(h), grid_w(w), values(Matrix::Zero(channels, h * w)) {}

    int channels() const { return static_cast<int>(values.rows()); }
    int cells() const { return grid_h * grid_w; }
    Scalar& at(int c, int row, int col) { return values(c, row * grid_w + col); }
    Scalar at(int c, int row, int col) const { return values(c, row * grid_w + col); }

    template <typename Other>
    FeatureMap<Other> cast() const {
        FeatureMap<Other> out;
        out.scale_id = scale_id;
        out.grid_h = grid_h;
        out.grid_w = grid_w;
        out.values = values.template cast<Other>();
        return out;
    }
};

using FeatureMapf = FeatureMap<float>;
using FeatureMapd = FeatureMap<double>;

/// Per-scale maps of one image, as stored in an FMAP file.
struct FeatureStack {
    std::uint32_t source_w = 0;
    std::uint32_t source_h = 0;
    std::vector<FeatureMapf> maps;

    const FeatureMapf* find(std::uint32_t scale_id) const {
        for (const auto& m : maps)
            if (m.scale_id == scale_id) return &m;
        return nullptr;
    }
};

struct FeaturePoint {
    double x = 0;
    double y = 0;
    double response = 0;

    friend bool operator==(const FeaturePoint&, const FeaturePoint&) = default;
};

/// Per-channel z-score across grid cells (population sigma). Constant
/// channels become zero.
template <typename Scalar>
FeatureMap<Scalar> z_normalize(const FeatureMap<Scalar>& map) {
    FeatureMap<Scalar> out = map;
    const auto n = static_cast<Scalar>(map.cells());
    if (map.cells() == 0) return out;
    for (Eigen::Index c = 0; c < map.values.rows(); ++c) {
        auto row = out.values.row(c);
        const Scalar mean = row.sum() / n;
        row.array() -= mean;
        const Scalar sigma = std::sqrt(row.squaredNorm() / n);
        if (sigma > Scalar(0) && std::isfinite(Scalar(1) / sigma)) {
            row /= sigma;
        } else {
            row.setZero();
        }
    }
    return out;
}

/// Center of grid cell (col, row) in source-image pixel coordinates.
FeaturePoint grid_to_image(int grid_w, int grid_h, int col, int row, double source_w, double source_h);

struct HarrisParams {
    double k = 0.04;
    int window = 1;       ///< non-maximum suppression radius
    int max_points = 400;
};

/// Harris corners: Sobel gradients, 3x3 Gaussian-weighted structure tensor,
/// response det - k trace^2. Returns positive local maxima, strongest first.
std::vector<FeaturePoint> detect_harris(const Image& gray, double k, int window, int max_points);
inline std::vector<FeaturePoint> detect_harris(const Image& gray, const HarrisParams& p = {}) {
    return detect_harris(gray, p.k, p.window, p.max_points);
}

/// Harris response map (width x height, row-major), exposed for testing.
std::vector<double> harris_response(const Image& gray, double k);

/// FAST-9 segment test on the radius-3 Bresenham circle. Score is the largest
/// threshold at which the pixel is still a corner; 3x3 non-maximum suppression.
std::vector<FeaturePoint> detect_fast(const Image& gray, int intensity_threshold, int max_points);

/// Largest t for which the pixel passes the segment test at threshold t, or -1.
int fast_score(const Image& gray, int x, int y);

/// Local appearance descriptors for detected points: a (2r+1)^2 patch of the
/// image around each point, edge-clamped, mean-centered and scaled to unit norm.
/// Returns a descriptor matrix with one column per point.
Eigen::MatrixXd patch_descriptors(const Image& gray, const std::vector<FeaturePoint>& points, int radius);

/// FMAP tensor file I/O (little-endian; "FMAP", version 1).
FeatureStack read_feature_stack(const std::filesystem::path& path);
FeatureStack decode_feature_stack(const std::vector<std::uint8_t>& bytes);
void write_feature_stack(const FeatureStack& stack, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_feature_stack(const FeatureStack& stack);

}  // namespace mmreg
