#pragma once

#include "mmreg/features.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <utility>
#include <vector>

namespace mmreg {

/// rows = moving-image features, cols = fixed-image features.
using DistanceMatrix = Eigen::MatrixXd;

/// Row-minimum match proposal inside one distance matrix.
struct Candidate {
    int row = 0;
    int col = 0;
    double distance = 0;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct MatchPair {
    Eigen::Vector2d moving;
    Eigen::Vector2d fixed;
    double score = 0;
};

using MatchSet = std::vector<MatchPair>;

/// Euclidean distances between descriptor columns: d(i, j) = |a.col(i) - b.col(j)|.
DistanceMatrix pairwise_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Same as above over grid cells of two maps of one scale.
DistanceMatrix pairwise_distances(const FeatureMapd& a, const FeatureMapd& b);

/// One candidate per row at its smallest column (lowest column on ties).
std::vector<Candidate> select_row_minima(const DistanceMatrix& d);

/// The ceil(fraction * n) smallest-distance candidates, sorted nondecreasing,
/// ties broken by row.
std::vector<Candidate> keep_top_fraction(std::vector<Candidate> cands, double fraction);

struct ScaleCandidates {
    std::uint32_t scale_id = 0;
    std::vector<Candidate> candidates;
};

/// Maps every candidate to pixel coordinates through its own scale's grid,
/// unions scales and collapses exact duplicate pairs to their smallest score.
/// The result is sorted by score (stable).
MatchSet pool_scales(const std::vector<ScaleCandidates>& per_scale, const FeatureStack& moving,
                     const FeatureStack& fixed);

}  // namespace mmreg
