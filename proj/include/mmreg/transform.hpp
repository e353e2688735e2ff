#pragma once

#include "mmreg/error.hpp"
#include "mmreg/image.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <variant>

namespace mmreg {

template <typename Scalar>
using Points2 = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

/// Thin-plate spline T(p) = affine * (p, 1) + sum_i w_i U(|p - c_i|), U(r) = r^2 log r.
template <typename Scalar>
struct TpsModel {
    Points2<Scalar> control;                 ///< n x 2 source points
    Eigen::Matrix<Scalar, 2, 3> affine;      ///< [linear | translation]
    Points2<Scalar> weights;                 ///< n x 2 radial coefficients
    Scalar lambda = 0;

    static TpsModel identity() {
        TpsModel m;
        m.affine.setZero();
        m.affine(0, 0) = 1;
        m.affine(1, 1) = 1;
        return m;
    }
};

/// Isotropic scale, rotation (radians, counter-clockwise in x-right/y-down
/// pixel axes as a plain 2-D rotation matrix), then translation.
template <typename Scalar>
struct SimilarityModel {
    Scalar scale = 1;
    Scalar rotation = 0;
    Vec2<Scalar> translation = Vec2<Scalar>::Zero();

    Eigen::Matrix<Scalar, 2, 2> linear() const {
        const Scalar c = std::cos(rotation), s = std::sin(rotation);
        Eigen::Matrix<Scalar, 2, 2> r;
        r << c, -s, s, c;
        return scale * r;
    }
};

using TpsModeld = TpsModel<double>;
using SimilarityModeld = SimilarityModel<double>;
using TransformModel = std::variant<TpsModeld, SimilarityModeld>;

/// U(r) = r^2 log r with U(0) = 0, evaluated from r^2.
template <typename Scalar>
Scalar tps_kernel_sq(Scalar r2) {
    return r2 > Scalar(0) ? Scalar(0.5) * r2 * std::log(r2) : Scalar(0);
}

namespace detail {

template <typename Scalar>
bool collinear(const Points2<Scalar>& p) {
    const Points2<Scalar> centered = p.rowwise() - p.colwise().mean();
    const Eigen::Matrix<Scalar, 2, 2> cov = centered.transpose() * centered;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 2, 2>> es(cov, Eigen::EigenvaluesOnly);
    const Scalar hi = es.eigenvalues()(1);
    return !(hi > Scalar(0)) || es.eigenvalues()(0) <= hi * Scalar(1e-20);
}

template <typename Scalar>
bool has_duplicates(const Points2<Scalar>& p) {
    const Scalar extent = (p.colwise().maxCoeff() - p.colwise().minCoeff()).norm();
    const Scalar tol = extent * Scalar(1e-12);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index j = i + 1; j < p.rows(); ++j)
            if ((p.row(i) - p.row(j)).norm() <= tol) return true;
    return false;
}

}  // namespace detail

/// Fits a TPS mapping src rows onto dst rows. With lambda = 0 the fit
/// interpolates; lambda is added to the kernel block's diagonal.
template <typename Scalar>
TpsModel<Scalar> fit_tps(const Points2<Scalar>& src, const Points2<Scalar>& dst, Scalar lambda = 0) {
    const Eigen::Index n = src.rows();
    if (dst.rows() != n) throw Error("source and target point counts differ");
    if (n < 3) throw Error("TPS needs at least 3 control points");
    if (!(lambda >= Scalar(0))) throw Error("TPS regularization must be nonnegative");
    if (!src.allFinite() || !dst.allFinite()) throw Error("non-finite control point");
    if (detail::collinear(src) || (lambda == Scalar(0) && detail::has_duplicates(src))) {
        throw Error("singular TPS system");
    }

    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Mat system = Mat::Zero(n + 3, n + 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const Scalar u = tps_kernel_sq<Scalar>((src.row(i) - src.row(j)).squaredNorm());
            system(i, j) = u;
            system(j, i) = u;
        }
        system(i, i) = lambda;
        system(i, n) = 1;
        system(i, n + 1) = src(i, 0);
        system(i, n + 2) = src(i, 1);
        system(n, i) = 1;
        system(n + 1, i) = src(i, 0);
        system(n + 2, i) = src(i, 1);
    }
    Mat rhs = Mat::Zero(n + 3, 2);
    rhs.topRows(n) = dst;

    Eigen::PartialPivLU<Mat> lu(system);
    if (!(lu.rcond() > Scalar(1e-15))) throw Error("singular TPS system");
    const Mat sol = lu.solve(rhs);
    if (!sol.allFinite()) throw Error("singular TPS system");

    TpsModel<Scalar> m;
    m.control = src;
    m.weights = sol.topRows(n);
    m.lambda = lambda;
    // sol rows n..n+2 are coefficients of (1, x, y).
    m.affine.col(0) = sol.row(n + 1).transpose();
    m.affine.col(1) = sol.row(n + 2).transpose();
    m.affine.col(2) = sol.row(n).transpose();
    return m;
}

template <typename Scalar>
Vec2<Scalar> apply_tps(const TpsModel<Scalar>& m, const Vec2<Scalar>& p) {
    Vec2<Scalar> out = m.affine.template leftCols<2>() * p + m.affine.col(2);
    for (Eigen::Index i = 0; i < m.control.rows(); ++i) {
        const Scalar u = tps_kernel_sq<Scalar>((m.control.row(i).transpose() - p).squaredNorm());
        out += u * m.weights.row(i).transpose();
    }
    return out;
}

/// Closed-form least-squares similarity (no reflection) mapping src onto dst.
template <typename Scalar>
SimilarityModel<Scalar> fit_similarity(const Points2<Scalar>& src, const Points2<Scalar>& dst) {
    if (src.rows() != dst.rows()) throw Error("source and target point counts differ");
    if (src.rows() < 2) throw Error("degenerate configuration");
    const Eigen::Matrix<Scalar, 1, 2> ms = src.colwise().mean();
    const Eigen::Matrix<Scalar, 1, 2> md = dst.colwise().mean();
    const Points2<Scalar> s = src.rowwise() - ms;
    const Points2<Scalar> d = dst.rowwise() - md;
    const Scalar var = s.squaredNorm();
    if (!(var > Scalar(0))) throw Error("degenerate configuration");
    // a = sum s.d, b = sum s x d; the optimal rotation is atan2(b, a).
    const Scalar a = (s.col(0).cwiseProduct(d.col(0)) + s.col(1).cwiseProduct(d.col(1))).sum();
    const Scalar b = (s.col(0).cwiseProduct(d.col(1)) - s.col(1).cwiseProduct(d.col(0))).sum();
    SimilarityModel<Scalar> m;
    m.rotation = std::atan2(b, a);
    m.scale = std::hypot(a, b) / var;
    if (!(m.scale > Scalar(0))) throw Error("degenerate configuration");
    m.translation = md.transpose() - m.linear() * ms.transpose();
    return m;
}

template <typename Scalar>
Vec2<Scalar> apply_similarity(const SimilarityModel<Scalar>& m, const Vec2<Scalar>& p) {
    return m.linear() * p + m.translation;
}

template <typename Scalar>
SimilarityModel<Scalar> invert(const SimilarityModel<Scalar>& m) {
    SimilarityModel<Scalar> inv;
    inv.scale = Scalar(1) / m.scale;
    inv.rotation = -m.rotation;
    inv.translation = -(inv.linear() * m.translation);
    return inv;
}

/// Reverse-direction TPS fitted on (T(c_i), c_i), used to pull pixels back.
TpsModeld invert_tps(const TpsModeld& m);

Vec2<double> apply_transform(const TransformModel& m, const Vec2<double>& p);

/// Resamples `moving` into an out_w x out_h frame: each output pixel center
/// is mapped back through the inverse model and bilinearly sampled;
/// positions outside the moving image are 0.
Image warp_image(const Image& moving, const TransformModel& model, int out_w, int out_h);

}  // namespace mmreg
