#include "oracles.hpp"

#include "mmreg/error.hpp"
#include "mmreg/matching.hpp"

#include <doctest.h>

using namespace mmreg;

namespace {

FeatureMapd random_map(std::mt19937_64& rng, int channels, int h, int w) {
    std::normal_distribution<double> nd;
    FeatureMapd m(0, channels, h, w);
    for (Eigen::Index i = 0; i < m.values.size(); ++i) m.values.data()[i] = nd(rng);
    return m;
}

FeatureStack grid_stack(std::initializer_list<int> sides) {
    FeatureStack s;
    s.source_w = s.source_h = 224;
    for (int g : sides) s.maps.emplace_back(static_cast<std::uint32_t>(g), 1, g, g);
    return s;
}

}  // namespace

TEST_CASE("pairwise_distances") {
    FeatureMapd a(0, 1, 1, 2), b(0, 1, 1, 2);
    a.values << 0, 3;
    b.values << 0, 4;
    const DistanceMatrix d = pairwise_distances(a, b);
    CHECK(d(0, 0) == 0);
    CHECK(d(0, 1) == 4);
    CHECK(d(1, 0) == 3);
    CHECK(d(1, 1) == 1);

    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = random_map(rng, 4, 3, 5);
        const auto y = random_map(rng, 4, 3, 5);
        const auto xx = pairwise_distances(x, x);
        CHECK(xx.diagonal().isZero(0));
        CHECK((xx - xx.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        const auto xy = pairwise_distances(x, y);
        const auto yx = pairwise_distances(y, x);
        CHECK((xy - yx.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(xy.minCoeff() >= 0);
        for (int i = 0; i < 15; ++i)
            for (int j = 0; j < 15; ++j)
                CHECK(xy(i, j) == doctest::Approx((x.values.col(i) - y.values.col(j)).norm()).epsilon(1e-12));
    }
    CHECK_THROWS_AS(pairwise_distances(random_map(rng, 2, 2, 2), random_map(rng, 3, 2, 2)), Error);
}

TEST_CASE("select_row_minima") {
    DistanceMatrix d(2, 2);
    d << 0, 4, 3, 1;
    CHECK(select_row_minima(d) == std::vector<Candidate>{{0, 0, 0}, {1, 1, 1}});
    DistanceMatrix tie = DistanceMatrix::Constant(1, 4, 2.5);
    CHECK(select_row_minima(tie) == std::vector<Candidate>{{0, 0, 2.5}});
    DistanceMatrix one(1, 1);
    one << 7;
    CHECK(select_row_minima(one) == std::vector<Candidate>{{0, 0, 7}});

    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> u(0, 5);
    for (int trial = 0; trial < 20; ++trial) {
        DistanceMatrix m(7, 9);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
        const auto c = select_row_minima(m);
        REQUIRE(c.size() == 7);
        for (int r = 0; r < 7; ++r) {
            int best = 0;
            for (int k = 1; k < 9; ++k)
                if (m(r, k) < m(r, best)) best = k;
            CHECK(c[r].row == r);
            CHECK(c[r].col == best);
            CHECK(c[r].distance == m(r, best));
        }
    }
}

TEST_CASE("keep_top_fraction") {
    std::vector<Candidate> ten;
    for (int i = 0; i < 10; ++i) ten.push_back({i, 0, static_cast<double>((i * 7) % 10)});
    const auto two = keep_top_fraction(ten, 0.2);
    REQUIRE(two.size() == 2);
    CHECK(two[0].distance == 0);
    CHECK(two[1].distance == 1);

    const auto all = keep_top_fraction(ten, 1.0);
    REQUIRE(all.size() == 10);
    for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].distance <= all[i].distance);

    std::vector<Candidate> five(ten.begin(), ten.begin() + 5);
    CHECK(keep_top_fraction(five, 0.2).size() == 1);

    const std::vector<Candidate> tied{{3, 0, 1.0}, {1, 0, 1.0}, {2, 0, 0.5}};
    const auto t = keep_top_fraction(tied, 1.0);
    CHECK(t[0].row == 2);
    CHECK(t[1].row == 1);
    CHECK(t[2].row == 3);

    CHECK_THROWS_AS(keep_top_fraction(ten, 0.0), Error);
    CHECK_THROWS_AS(keep_top_fraction(ten, 1.5), Error);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> len(1, 60);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Candidate> c;
        const int n = len(rng);
        for (int i = 0; i < n; ++i) c.push_back({i, i % 3, std::round(u(rng) * 20) / 20});
        const double f = std::max(1e-3, u(rng));
        const auto kept = keep_top_fraction(c, f);
        CHECK(kept.size() == static_cast<std::size_t>(std::ceil(f * n - 1e-9)));
        double max_kept = -1;
        std::vector<bool> used(n, false);
        for (const auto& k : kept) {
            CHECK(k == c[k.row]);
            CHECK(!used[k.row]);
            used[k.row] = true;
            max_kept = std::max(max_kept, k.distance);
        }
        for (int i = 0; i < n; ++i)
            if (!used[i]) CHECK(c[i].distance >= max_kept);
    }
}

TEST_CASE("pool_scales") {
    const FeatureStack moving = grid_stack({28, 14, 7});
    const FeatureStack fixed = grid_stack({28, 14, 7});

    SUBCASE("single scale passthrough") {
        const std::vector<ScaleCandidates> per{{28, {{0, 0, 0.1}, {29, 30, 0.2}}}};
        const MatchSet m = pool_scales(per, moving, fixed);
        REQUIRE(m.size() == 2);
        CHECK(m[0].moving == Eigen::Vector2d(4, 4));
        CHECK(m[0].fixed == Eigen::Vector2d(4, 4));
        CHECK(m[0].score == 0.1);
        CHECK(m[1].moving == Eigen::Vector2d(12, 12));   // cell (1, 1)
        CHECK(m[1].fixed == Eigen::Vector2d(20, 12));    // cell (2, 1)
    }
    SUBCASE("duplicates keep the smaller score") {
        // The same scale listed twice yields the same pixel pair.
        const std::vector<ScaleCandidates> per{{14, {{3, 4, 0.5}}}, {14, {{3, 4, 0.3}}}};
        const MatchSet m = pool_scales(per, moving, fixed);
        REQUIRE(m.size() == 1);
        CHECK(m[0].score == 0.3);
    }
    SUBCASE("two scales without collisions") {
        std::vector<ScaleCandidates> per{{28, {}}, {7, {}}};
        for (int k = 0; k < 5; ++k) {
            per[0].candidates.push_back({k, k + 1, 0.1 * k});
            per[1].candidates.push_back({k, 48 - k, 0.05 * k});
        }
        const MatchSet m = pool_scales(per, moving, fixed);
        CHECK(m.size() == 10);
        for (std::size_t i = 1; i < m.size(); ++i) CHECK(m[i - 1].score <= m[i].score);
        for (const auto& p : m) {
            CHECK(p.moving.x() > 0);
            CHECK(p.moving.x() < 224);
            CHECK(p.fixed.y() > 0);
            CHECK(p.fixed.y() < 224);
        }
    }
    SUBCASE("unknown scale") {
        const std::vector<ScaleCandidates> per{{9, {{0, 0, 0.1}}}};
        CHECK_THROWS_WITH_AS(pool_scales(per, moving, fixed), doctest::Contains("unknown scale id"), Error);
    }
}

TEST_CASE("matching stage is deterministic") {
    std::mt19937_64 rng(4);
    const auto a = random_map(rng, 8, 7, 7);
    const auto b = random_map(rng, 8, 7, 7);
    auto run = [&] {
        return keep_top_fraction(select_row_minima(pairwise_distances(z_normalize(a), z_normalize(b))), 0.2);
    };
    CHECK(run() == run());
}
