#pragma once

#include "mmreg/matching.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace mmreg {

using PointList = std::vector<Eigen::Vector2d>;

struct NormalizedPoints {
    PointList points;        ///< centered and divided by mean_dist
    double mean_dist = 0;    ///< mean pairwise distance of the input
};

/// Rescales a point set so its mean pairwise distance is 1.
NormalizedPoints normalize_points(std::span<const Eigen::Vector2d> points);

struct ShapeContextParams {
    int radial_bins = 5;
    int angular_bins = 12;
    double r_min = 0.125;
    double r_max = 2.0;

    int bins() const { return radial_bins * angular_bins; }
};

/// Log-polar neighbor counts, one row per point, bin k = radial * angular_bins + angular.
/// Radii outside [r_min, r_max] fall into the innermost / outermost ring, so
/// every row sums to n - 1.
Eigen::MatrixXi shape_context_counts(std::span<const Eigen::Vector2d> points, const ShapeContextParams& p);

/// shape_context_counts normalized to unit row sums (rows of a lone point stay zero).
Eigen::MatrixXd shape_context(std::span<const Eigen::Vector2d> points, const ShapeContextParams& p);

/// Chi-square histogram distance between every row of `a` and every row of `b`.
Eigen::MatrixXd cost_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct Assignment {
    std::vector<int> row_to_col;   ///< -1 where the row was matched to padding
    double total_cost = 0;         ///< sum over real pairs, in row order
};

/// Minimum-cost assignment by Jonker-Volgenant shortest augmenting paths.
/// Rectangular inputs are padded to square with cost max + 1.
Assignment solve_assignment(const Eigen::MatrixXd& cost);

/// Linear-interpolation sample quantile of an ascending-sorted sample.
double quantile_sorted(std::span<const double> sorted, double q);

/// Keeps pairs whose moving-to-fixed pixel distance lies in [Q25, Q75].
/// Input order is preserved.
MatchSet quantile_filter(const MatchSet& pairs, double lower_q = 0.25, double upper_q = 0.75);

struct CorrespondenceResult {
    MatchSet assigned;
    MatchSet inliers;
};

/// Re-pairs the distinct moving and fixed points of `candidates` by minimum
/// total shape-context cost, then applies the quantile inlier filter.
CorrespondenceResult refine_correspondences(const MatchSet& candidates, const ShapeContextParams& p);

}  // namespace mmreg
