#include "mmreg/correspondence.hpp"

#include "mmreg/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>
#include <map>

namespace mmreg {

namespace {

void check_params(const ShapeContextParams& p) {
    if (p.radial_bins < 1 || p.angular_bins < 1) throw Error("shape context needs at least one bin per axis");
    if (!(p.r_min > 0.0) || !(p.r_min < p.r_max)) throw Error("shape context requires 0 < r_min < r_max");
}

// Dense square LAPJV. rowsol[i] is the column of row i; returns nothing, the
// caller sums costs itself.
void lapjv(const Eigen::MatrixXd& c, std::vector<int>& rowsol) {
    const int n = static_cast<int>(c.rows());
    rowsol.assign(n, -1);
    if (n == 0) return;
    if (n == 1) {
        rowsol[0] = 0;
        return;
    }
    constexpr double kBig = std::numeric_limits<double>::infinity();
    std::vector<int> colsol(n, -1), matches(n, 0), free_rows(n), collist(n), pred(n);
    std::vector<double> v(n), d(n);

    // Column reduction, scanning columns from last to first.
    for (int j = n - 1; j >= 0; --j) {
        int imin = 0;
        double min = c(0, j);
        for (int i = 1; i < n; ++i) {
            if (c(i, j) < min) {
                min = c(i, j);
                imin = i;
            }
        }
        v[j] = min;
        if (++matches[imin] == 1) {
            rowsol[imin] = j;
            colsol[j] = imin;
        } else if (v[j] < v[rowsol[imin]]) {
            const int j1 = rowsol[imin];
            rowsol[imin] = j;
            colsol[j] = imin;
            colsol[j1] = -1;
        } else {
            colsol[j] = -1;
        }
    }

    // Reduction transfer from singly-assigned rows.
    int numfree = 0;
    for (int i = 0; i < n; ++i) {
        if (matches[i] == 0) {
            free_rows[numfree++] = i;
        } else if (matches[i] == 1) {
            const int j1 = rowsol[i];
            double min = kBig;
            for (int j = 0; j < n; ++j)
                if (j != j1) min = std::min(min, c(i, j) - v[j]);
            v[j1] -= min;
        }
    }

    // Augmenting row reduction, two passes. A price drop only counts if it
    // changes v in floating point, and the number of re-insertions is capped;
    // otherwise near-tied rows can trade a column back and forth forever.
    for (int pass = 0; pass < 2; ++pass) {
        int k = 0;
        const int prvnumfree = numfree;
        numfree = 0;
        long reductions = 0;
        while (k < prvnumfree) {
            const int i = free_rows[k++];
            double umin = c(i, 0) - v[0];
            int j1 = 0;
            int j2 = -1;
            double usubmin = kBig;
            for (int j = 1; j < n; ++j) {
                const double h = c(i, j) - v[j];
                if (h < usubmin) {
                    if (h >= umin) {
                        usubmin = h;
                        j2 = j;
                    } else {
                        usubmin = umin;
                        umin = h;
                        j2 = j1;
                        j1 = j;
                    }
                }
            }
            int i0 = colsol[j1];
            const double lowered = v[j1] - (usubmin - umin);
            const bool lowers = lowered < v[j1];
            if (++reductions < static_cast<long>(k) * n) {
                if (lowers) {
                    v[j1] = lowered;
                } else if (i0 > -1 && j2 > -1) {
                    j1 = j2;
                    i0 = colsol[j2];
                }
                if (i0 > -1) {
                    if (lowers) {
                        free_rows[--k] = i0;
                    } else {
                        free_rows[numfree++] = i0;
                    }
                }
            } else if (i0 > -1) {
                free_rows[numfree++] = i0;
            }
            rowsol[i] = j1;
            colsol[j1] = i;
        }
    }

    // Shortest augmenting path for each remaining free row.
    for (int f = 0; f < numfree; ++f) {
        const int freerow = free_rows[f];
        for (int j = 0; j < n; ++j) {
            d[j] = c(freerow, j) - v[j];
            pred[j] = freerow;
            collist[j] = j;
        }
        int low = 0;
        int up = 0;
        int last = 0;
        int endofpath = -1;
        double min = 0;
        bool found = false;
        do {
            if (up == low) {
                // Collect the columns at the new minimum distance.
                last = low - 1;
                min = d[collist[up++]];
                for (int k = up; k < n; ++k) {
                    const int j = collist[k];
                    const double h = d[j];
                    if (h <= min) {
                        if (h < min) {
                            up = low;
                            min = h;
                        }
                        collist[k] = collist[up];
                        collist[up++] = j;
                    }
                }
                for (int k = low; k < up; ++k) {
                    if (colsol[collist[k]] < 0) {
                        endofpath = collist[k];
                        found = true;
                        break;
                    }
                }
            }
            if (!found) {
                const int j1 = collist[low++];
                const int i = colsol[j1];
                const double h = c(i, j1) - v[j1] - min;
                for (int k = up; k < n; ++k) {
                    const int j = collist[k];
                    const double v2 = c(i, j) - v[j] - h;
                    if (v2 < d[j]) {
                        pred[j] = i;
                        if (v2 == min) {
                            if (colsol[j] < 0) {
                                endofpath = j;
                                found = true;
                                break;
                            }
                            collist[k] = collist[up];
                            collist[up++] = j;
                        }
                        d[j] = v2;
                    }
                }
            }
        } while (!found);

        for (int k = 0; k <= last; ++k) {
            const int j1 = collist[k];
            v[j1] += d[j1] - min;
        }
        int i = -1;
        do {
            i = pred[endofpath];
            colsol[endofpath] = i;
            std::swap(endofpath, rowsol[i]);
        } while (i != freerow);
    }
}

}  // namespace

NormalizedPoints normalize_points(std::span<const Eigen::Vector2d> points) {
    const std::size_t n = points.size();
    double sum = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            sum += (points[i] - points[j]).norm();
            ++pairs;
        }
    }
    if (pairs == 0 || !(sum > 0)) throw Error("degenerate point set");
    const double mean = sum / static_cast<double>(pairs);

    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    for (const auto& p : points) centroid += p;
    centroid /= static_cast<double>(n);

    NormalizedPoints out;
    out.mean_dist = mean;
    out.points.reserve(n);
    for (const auto& p : points) out.points.push_back((p - centroid) / mean);
    return out;
}

Eigen::MatrixXi shape_context_counts(std::span<const Eigen::Vector2d> points, const ShapeContextParams& p) {
    check_params(p);
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(n, p.bins());
    const double log_min = std::log(p.r_min);
    const double log_step = (std::log(p.r_max) - log_min) / p.radial_bins;
    const double angle_step = 2.0 * std::numbers::pi / p.angular_bins;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const Eigen::Vector2d rel = points[j] - points[i];
            const double r = rel.norm();
            int rb = 0;
            if (r > 0) {
                rb = static_cast<int>(std::floor((std::log(r) - log_min) / log_step));
                rb = std::clamp(rb, 0, p.radial_bins - 1);
            }
            double theta = std::atan2(rel.y(), rel.x());
            if (theta < 0) theta += 2.0 * std::numbers::pi;
            const int ab = std::clamp(static_cast<int>(std::floor(theta / angle_step)), 0, p.angular_bins - 1);
            ++counts(i, rb * p.angular_bins + ab);
        }
    }
    return counts;
}

Eigen::MatrixXd shape_context(std::span<const Eigen::Vector2d> points, const ShapeContextParams& p) {
    Eigen::MatrixXd h = shape_context_counts(points, p).cast<double>();
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        const double s = h.row(i).sum();
        if (s > 0) h.row(i) /= s;
    }
    return h;
}

Eigen::MatrixXd cost_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.cols() != b.cols()) throw Error("descriptor bin-count mismatch");
    Eigen::MatrixXd c(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            double acc = 0;
            for (Eigen::Index k = 0; k < a.cols(); ++k) {
                const double s = a(i, k) + b(j, k);
                if (s > 0) {
                    const double diff = a(i, k) - b(j, k);
                    acc += diff * diff / s;
                }
            }
            c(i, j) = 0.5 * acc;
        }
    }
    return c;
}

Assignment solve_assignment(const Eigen::MatrixXd& cost) {
    if (!cost.allFinite()) throw Error("non-finite cost entry");
    const auto rows = cost.rows();
    const auto cols = cost.cols();
    Assignment out;
    out.row_to_col.assign(static_cast<std::size_t>(rows), -1);
    if (rows == 0 || cols == 0) return out;

    const Eigen::Index n = std::max(rows, cols);
    Eigen::MatrixXd square = Eigen::MatrixXd::Constant(n, n, cost.maxCoeff() + 1.0);
    square.topLeftCorner(rows, cols) = cost;

    std::vector<int> rowsol;
    lapjv(square, rowsol);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const int j = rowsol[static_cast<std::size_t>(i)];
        if (j < cols) {
            out.row_to_col[static_cast<std::size_t>(i)] = j;
            out.total_cost += cost(i, j);
        }
    }
    return out;
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw Error("quantile of an empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

MatchSet quantile_filter(const MatchSet& pairs, double lower_q, double upper_q) {
    if (pairs.size() < 4) throw Error("too few matches for quantile filtering");
    std::vector<double> dist;
    dist.reserve(pairs.size());
    for (const auto& m : pairs) dist.push_back((m.moving - m.fixed).norm());
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    const double lo = quantile_sorted(sorted, lower_q);
    const double hi = quantile_sorted(sorted, upper_q);
    MatchSet out;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        if (dist[i] >= lo && dist[i] <= hi) out.push_back(pairs[i]);
    return out;
}

CorrespondenceResult refine_correspondences(const MatchSet& candidates, const ShapeContextParams& p) {
    // Distinct points per side, in first-appearance order.
    auto unique_side = [&](auto member) {
        PointList pts;
        std::map<std::pair<double, double>, int> index;
        for (const auto& m : candidates) {
            const Eigen::Vector2d& q = m.*member;
            if (index.emplace(std::make_pair(q.x(), q.y()), static_cast<int>(pts.size())).second) pts.push_back(q);
        }
        return pts;
    };
    const PointList moving = unique_side(&MatchPair::moving);
    const PointList fixed = unique_side(&MatchPair::fixed);

    const auto moving_norm = normalize_points(moving);
    const auto fixed_norm = normalize_points(fixed);
    const Eigen::MatrixXd cost =
        cost_matrix(shape_context(moving_norm.points, p), shape_context(fixed_norm.points, p));
    const Assignment assignment = solve_assignment(cost);

    CorrespondenceResult out;
    for (std::size_t i = 0; i < moving.size(); ++i) {
        const int j = assignment.row_to_col[i];
        if (j < 0) continue;
        out.assigned.push_back({moving[i], fixed[static_cast<std::size_t>(j)], cost(static_cast<Eigen::Index>(i), j)});
    }
    out.inliers = quantile_filter(out.assigned);
    return out;
}

}  // namespace mmreg
