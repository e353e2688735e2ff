#include "mmreg/transform.hpp"

#include <algorithm>

namespace mmreg {

TpsModeld invert_tps(const TpsModeld& m) {
    if (m.control.rows() == 0) {
        // Pure affine model: invert the affine part directly.
        const Eigen::Matrix2d lin = m.affine.leftCols<2>();
        if (std::abs(lin.determinant()) < 1e-15) throw Error("singular TPS system");
        TpsModeld inv = TpsModeld::identity();
        inv.affine.leftCols<2>() = lin.inverse();
        inv.affine.col(2) = -(inv.affine.leftCols<2>() * m.affine.col(2));
        return inv;
    }
    Points2<double> targets(m.control.rows(), 2);
    for (Eigen::Index i = 0; i < m.control.rows(); ++i)
        targets.row(i) = apply_tps(m, Vec2<double>(m.control.row(i).transpose())).transpose();
    return fit_tps<double>(targets, m.control, m.lambda);
}

Vec2<double> apply_transform(const TransformModel& m, const Vec2<double>& p) {
    return std::visit(
        [&](const auto& model) -> Vec2<double> {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, TpsModeld>) {
                return apply_tps(model, p);
            } else {
                return apply_similarity(model, p);
            }
        },
        m);
}

Image warp_image(const Image& moving, const TransformModel& model, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw Error("zero output size");
    if (moving.empty()) throw Error("cannot warp an empty image");

    const TransformModel inverse = std::visit(
        [](const auto& m) -> TransformModel {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, TpsModeld>) {
                return invert_tps(m);
            } else {
                return invert(m);
            }
        },
        model);

    Image out(out_w, out_h, moving.channels);
    const double max_x = moving.width - 1.0;
    const double max_y = moving.height - 1.0;
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const Vec2<double> src = apply_transform(inverse, Vec2<double>(x + 0.5, y + 0.5));
            // Pixel-index coordinates; the image footprint is [-0.5, size - 0.5].
            double sx = src.x() - 0.5;
            double sy = src.y() - 0.5;
            if (!(sx >= -0.5 && sx <= max_x + 0.5 && sy >= -0.5 && sy <= max_y + 0.5)) continue;
            sx = std::clamp(sx, 0.0, max_x);
            sy = std::clamp(sy, 0.0, max_y);
            const int x0 = static_cast<int>(sx);
            const int y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, moving.width - 1);
            const int y1 = std::min(y0 + 1, moving.height - 1);
            const double fx = sx - x0;
            const double fy = sy - y0;
            for (int c = 0; c < moving.channels; ++c) {
                const double top = (1 - fx) * moving.at(x0, y0, c) + fx * moving.at(x1, y0, c);
                const double bot = (1 - fx) * moving.at(x0, y1, c) + fx * moving.at(x1, y1, c);
                const double v = (1 - fy) * top + fy * bot;
                out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

}  // namespace mmreg
