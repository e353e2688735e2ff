#include "mmreg/metrics.hpp"

#include "mmreg/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace mmreg {

namespace {

void require_same_shape(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
        throw Error("dimension mismatch");
    }
    if (a.empty()) throw Error("empty image");
}

Eigen::VectorXd gaussian_kernel(int size, double sigma) {
    Eigen::VectorXd g(size);
    const double c = (size - 1) / 2.0;
    for (int i = 0; i < size; ++i) g(i) = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
    return g / g.sum();
}

using Plane = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Valid-region separable filtering: output is (h - k + 1) x (w - k + 1).
Plane filter_valid(const Plane& in, const Eigen::VectorXd& g) {
    const Eigen::Index k = g.size();
    const Eigen::Index oh = in.rows() - k + 1;
    const Eigen::Index ow = in.cols() - k + 1;
    Plane horiz(in.rows(), ow);
    for (Eigen::Index y = 0; y < in.rows(); ++y)
        for (Eigen::Index x = 0; x < ow; ++x) horiz(y, x) = in.row(y).segment(x, k).dot(g.transpose());
    Plane out(oh, ow);
    for (Eigen::Index y = 0; y < oh; ++y)
        for (Eigen::Index x = 0; x < ow; ++x) out(y, x) = horiz.col(x).segment(y, k).dot(g);
    return out;
}

Plane to_plane(const Image& gray) {
    Plane p(gray.height, gray.width);
    for (int y = 0; y < gray.height; ++y)
        for (int x = 0; x < gray.width; ++x) p(y, x) = gray.at(x, y);
    return p;
}

}  // namespace

double rmse(const Image& a, const Image& b) {
    require_same_shape(a, b);
    double acc = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.pixels.size()));
}

double aaid(const Image& a, const Image& b) {
    require_same_shape(a, b);
    std::uint64_t acc = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) acc += static_cast<std::uint64_t>(std::abs(a.pixels[i] - b.pixels[i]));
    return static_cast<double>(acc) / static_cast<double>(a.pixels.size());
}

double ssim(const Image& a, const Image& b, const SsimParams& p) {
    require_same_shape(a, b);
    if (p.window < 1 || !(p.sigma > 0)) throw Error("invalid SSIM window");
    if (std::min(a.width, a.height) < p.window) throw Error("image smaller than the SSIM window");
    const Plane x = to_plane(to_grayscale(a));
    const Plane y = to_plane(to_grayscale(b));
    const Eigen::VectorXd g = gaussian_kernel(p.window, p.sigma);

    const Plane mu_x = filter_valid(x, g);
    const Plane mu_y = filter_valid(y, g);
    const Plane xx = filter_valid(x.cwiseProduct(x), g);
    const Plane yy = filter_valid(y.cwiseProduct(y), g);
    const Plane xy = filter_valid(x.cwiseProduct(y), g);

    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    const double c3 = c2 / 2;

    double acc = 0;
    for (Eigen::Index i = 0; i < mu_x.size(); ++i) {
        const double mx = mu_x.data()[i];
        const double my = mu_y.data()[i];
        const double vx = std::max(0.0, xx.data()[i] - mx * mx);
        const double vy = std::max(0.0, yy.data()[i] - my * my);
        const double cov = xy.data()[i] - mx * my;
        const double sx = std::sqrt(vx);
        const double sy = std::sqrt(vy);
        const double l = (2 * mx * my + c1) / (mx * mx + my * my + c1);
        const double c = (2 * sx * sy + c2) / (vx + vy + c2);
        const double s = (cov + c3) / (sx * sy + c3);
        acc += l * c * s;
    }
    return acc / static_cast<double>(mu_x.size());
}

MetricReport compare(const Image& a, const Image& b, const SsimParams& p) {
    return {rmse(a, b), aaid(a, b), ssim(a, b, p)};
}

}  // namespace mmreg
