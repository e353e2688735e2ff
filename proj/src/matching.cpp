#include "mmreg/matching.hpp"

#include "mmreg/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>

namespace mmreg {

DistanceMatrix pairwise_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows()) throw Error("channel mismatch between feature sets");
    DistanceMatrix d(a.cols(), b.cols());
    for (Eigen::Index j = 0; j < b.cols(); ++j)
        for (Eigen::Index i = 0; i < a.cols(); ++i) d(i, j) = (a.col(i) - b.col(j)).norm();
    return d;
}

DistanceMatrix pairwise_distances(const FeatureMapd& a, const FeatureMapd& b) {
    if (a.channels() != b.channels()) throw Error("channel mismatch between feature maps");
    if (a.grid_h != b.grid_h || a.grid_w != b.grid_w) throw Error("grid mismatch between feature maps");
    return pairwise_distances(a.values, b.values);
}

std::vector<Candidate> select_row_minima(const DistanceMatrix& d) {
    std::vector<Candidate> out;
    out.reserve(static_cast<std::size_t>(d.rows()));
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        if (d.cols() == 0) break;
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < d.cols(); ++j)
            if (d(i, j) < d(i, best)) best = j;
        out.push_back({static_cast<int>(i), static_cast<int>(best), d(i, best)});
    }
    return out;
}

std::vector<Candidate> keep_top_fraction(std::vector<Candidate> cands, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("fraction must lie in (0, 1]");
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(a.distance, a.row) < std::tie(b.distance, b.row);
    });
    // The epsilon absorbs products like 0.7 * 10 = 7.000000000000001.
    const double want = std::ceil(fraction * static_cast<double>(cands.size()) - 1e-9);
    cands.resize(std::min(cands.size(), static_cast<std::size_t>(want)));
    return cands;
}

MatchSet pool_scales(const std::vector<ScaleCandidates>& per_scale, const FeatureStack& moving,
                     const FeatureStack& fixed) {
    using Key = std::tuple<double, double, double, double>;
    std::map<Key, std::size_t> seen;
    MatchSet out;
    for (const auto& sc : per_scale) {
        const FeatureMapf* mm = moving.find(sc.scale_id);
        const FeatureMapf* fm = fixed.find(sc.scale_id);
        if (!mm || !fm) throw Error("unknown scale id " + std::to_string(sc.scale_id));
        for (const auto& c : sc.candidates) {
            if (c.row < 0 || c.row >= mm->cells() || c.col < 0 || c.col >= fm->cells()) {
                throw Error("candidate index out of range for scale " + std::to_string(sc.scale_id));
            }
            const auto p = grid_to_image(mm->grid_w, mm->grid_h, c.row % mm->grid_w, c.row / mm->grid_w,
                                         moving.source_w, moving.source_h);
            const auto q = grid_to_image(fm->grid_w, fm->grid_h, c.col % fm->grid_w, c.col / fm->grid_w,
                                         fixed.source_w, fixed.source_h);
            const Key key{p.x, p.y, q.x, q.y};
            auto [it, inserted] = seen.emplace(key, out.size());
            if (inserted) {
                out.push_back({{p.x, p.y}, {q.x, q.y}, c.distance});
            } else {
                out[it->second].score = std::min(out[it->second].score, c.distance);
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const MatchPair& a, const MatchPair& b) { return a.score < b.score; });
    return out;
}

}  // namespace mmreg
