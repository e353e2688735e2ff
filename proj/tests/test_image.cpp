#include "oracles.hpp"

#include "mmreg/error.hpp"
#include "mmreg/image.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace mmreg;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "mmreg_test_image";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream(p, std::ios::binary) << bytes;
}

// Filled disc of radius r centered on (cx, cy).
void disc(BinaryImage& b, int cx, int cy, int r) {
    for (int y = 0; y < b.height; ++y)
        for (int x = 0; x < b.width; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) b.mask[y * b.width + x] = 1;
}

}  // namespace

TEST_CASE("load_image reads binary PGM bytes verbatim") {
    const auto p = scratch("a.pgm");
    write_bytes(p, std::string("P5\n2 2\n255\n") + std::string("\x00\x80\xff\x40", 4));
    const Image img = load_image(p);
    CHECK(img == Image(2, 2, 1, std::vector<std::uint8_t>{0, 128, 255, 64}));
}

TEST_CASE("load_image decodes a one-pixel red PNG") {
    const auto p = scratch("red.png");
    save_png(Image(1, 1, 3, std::vector<std::uint8_t>{255, 0, 0}), p);
    const Image img = load_image(p);
    CHECK(img.width == 1);
    CHECK(img.height == 1);
    CHECK(img.channels == 3);
    CHECK(img.pixels == std::vector<std::uint8_t>{255, 0, 0});
}

TEST_CASE("load_image rejects truncated files") {
    const auto good = scratch("good.png");
    std::mt19937_64 rng(7);
    save_png(oracle::random_image(rng, 16, 16), good);
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    const auto cut = scratch("cut.png");
    write_bytes(cut, bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_WITH_AS(load_image(cut), doctest::Contains("unsupported or corrupt image"), Error);

    const auto pgm = scratch("cut.pgm");
    write_bytes(pgm, "P5\n4 4\n255\nab");
    CHECK_THROWS_WITH_AS(load_image(pgm), doctest::Contains("unsupported or corrupt image"), Error);
    CHECK_THROWS_AS(load_image(scratch("missing.png")), Error);
}

TEST_CASE("PNG round-trip preserves gray and RGB pixels") {
    std::mt19937_64 rng(3);
    for (int c : {1, 3}) {
        const Image img = oracle::random_image(rng, 13, 7, c);
        const auto p = scratch("rt" + std::to_string(c) + ".png");
        save_png(img, p);
        CHECK(load_image(p) == img);
    }
}

TEST_CASE("to_grayscale") {
    CHECK(to_grayscale(Image(1, 1, 3, std::vector<std::uint8_t>{255, 255, 255})).pixels[0] == 255);
    // round(0.2989 * 255) = round(76.22)
    CHECK(to_grayscale(Image(1, 1, 3, std::vector<std::uint8_t>{255, 0, 0})).pixels[0] == 76);
    std::mt19937_64 rng(1);
    const Image gray = oracle::random_image(rng, 9, 5);
    CHECK(to_grayscale(gray) == gray);
    CHECK(to_grayscale(to_grayscale(gray)) == gray);

    const Image rgb = oracle::random_image(rng, 9, 5, 3);
    const Image g = to_grayscale(rgb);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 9; ++x) {
            const double l = 0.2989 * rgb.at(x, y, 0) + 0.5870 * rgb.at(x, y, 1) + 0.1140 * rgb.at(x, y, 2);
            CHECK(std::abs(g.at(x, y) - l) <= 0.5 + 1e-9);
        }
}

TEST_CASE("resize_bilinear") {
    std::mt19937_64 rng(5);
    const Image img = oracle::random_image(rng, 224, 224);
    CHECK(resize_bilinear(img, 224, 224) == img);

    const Image row(2, 1, 1, std::vector<std::uint8_t>{0, 255});
    const Image up = resize_bilinear(row, 4, 1);
    REQUIRE(up.width == 4);
    // Source sample positions (i + 0.5) / 2 - 0.5, clamped to [0, 1].
    const double pos[] = {0.0, 0.25, 0.75, 1.0};
    for (int i = 0; i < 4; ++i) {
        CHECK(up.at(i, 0) == static_cast<int>(std::lround(255 * pos[i])));
        if (i) CHECK(up.at(i, 0) >= up.at(i - 1, 0));
    }
    CHECK(up.at(0, 0) == 0);
    CHECK(up.at(3, 0) == 255);

    const Image flat(17, 11, 1, 100);
    for (auto [w, h] : {std::pair{5, 3}, {40, 23}, {1, 1}}) {
        const Image r = resize_bilinear(flat, w, h);
        CHECK(r == Image(w, h, 1, 100));
    }
    CHECK_THROWS_WITH_AS(resize_bilinear(flat, 0, 4), doctest::Contains("zero target dimension"), Error);
}

TEST_CASE("Otsu matches the exhaustive between-class variance scan") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const Image img = trial % 2 ? oracle::bimodal_image(rng, 48, 40) : oracle::random_image(rng, 32, 32);
        std::array<std::uint64_t, 256> hist{};
        for (auto v : img.pixels) ++hist[v];
        CHECK(otsu_threshold(hist) == oracle::otsu(img));
    }
}

TEST_CASE("binarize") {
    Image half(20, 10, 1, 10);
    for (int y = 0; y < 10; ++y)
        for (int x = 10; x < 20; ++x) half.at(x, y) = 200;
    const BinaryImage b = binarize(half, OtsuThreshold{});
    std::array<std::uint64_t, 256> hist{};
    for (auto v : half.pixels) ++hist[v];
    const int t = otsu_threshold(hist);
    CHECK(t >= 10);
    CHECK(t <= 199);
    CHECK(t == oracle::otsu(half));
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 20; ++x) CHECK(b.at(x, y) == (x >= 10));

    const Image two(2, 1, 1, std::vector<std::uint8_t>{100, 200});
    const BinaryImage f = binarize(two, FixedThreshold{128});
    CHECK(!f.at(0, 0));
    CHECK(f.at(1, 0));

    CHECK_THROWS_WITH_AS(binarize(Image(8, 8, 1, 50), OtsuThreshold{}), doctest::Contains("degenerate histogram"),
                         Error);
    CHECK_THROWS_WITH_AS(binarize(Image(8, 8, 1, 50), FixedThreshold{128}), doctest::Contains("empty foreground"),
                         Error);
}

TEST_CASE("remove_small_components keeps what the flood-fill oracle keeps") {
    BinaryImage b(30, 30);
    for (int y = 5; y < 15; ++y)
        for (int x = 5; x < 15; ++x) b.mask[y * 30 + x] = 1;   // 100 px
    b.mask[25 * 30 + 25] = b.mask[25 * 30 + 26] = b.mask[26 * 30 + 27] = 1;  // 3 px, diagonal link
    const BinaryImage out = remove_small_components(b, 10);
    CHECK(out.foreground_count() == 100);
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 30; ++x) CHECK(out.at(x, y) == (x >= 5 && x < 15 && y >= 5 && y < 15));

    CHECK(remove_small_components(b, 0) == b);

    BinaryImage small(10, 10);
    for (int i = 0; i < 5; ++i) small.mask[i] = 1;
    CHECK_THROWS_WITH_AS(remove_small_components(small, 10), doctest::Contains("empty foreground"), Error);
}

TEST_CASE("component cleanup on random masks") {
    std::mt19937_64 rng(23);
    std::bernoulli_distribution on(0.3);
    for (int trial = 0; trial < 20; ++trial) {
        BinaryImage b(40, 30);
        for (auto& m : b.mask) m = on(rng);
        disc(b, 20, 15, 8);
        const auto comps = oracle::flood_fill(b);
        const int min_area = 1 + trial;
        const BinaryImage out = remove_small_components(b, min_area);
        std::size_t largest = 0;
        for (std::size_t c = 1; c < comps.sizes.size(); ++c)
            if (comps.sizes[c] > comps.sizes[largest]) largest = c;
        for (std::size_t i = 0; i < b.mask.size(); ++i) {
            const bool keep = b.mask[i] && comps.sizes[comps.labels[i]] >= min_area;
            CHECK(static_cast<bool>(out.mask[i]) == keep);
            if (out.mask[i]) CHECK(b.mask[i]);
            if (b.mask[i] && comps.labels[i] == static_cast<int>(largest)) CHECK(out.mask[i]);
        }
        int count = 0;
        const auto labels = label_components(b, &count);
        CHECK(count == static_cast<int>(comps.sizes.size()));
        for (std::size_t i = 0; i < b.mask.size(); ++i)
            CHECK((labels[i] == 0) == (comps.labels[i] < 0));
    }
}

TEST_CASE("binarize then cleanup preserves the largest component") {
    std::mt19937_64 rng(31);
    Image img = oracle::random_image(rng, 64, 64);
    for (auto& p : img.pixels) p /= 3;                  // background below 86
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if ((x - 30) * (x - 30) + (y - 34) * (y - 34) < 200) img.at(x, y) = 240;
    const BinaryImage b = binarize(img, OtsuThreshold{});
    const auto comps = oracle::flood_fill(b);
    std::size_t largest = 0;
    for (std::size_t c = 1; c < comps.sizes.size(); ++c)
        if (comps.sizes[c] > comps.sizes[largest]) largest = c;
    const BinaryImage out = remove_small_components(b, 20);
    for (std::size_t i = 0; i < b.mask.size(); ++i)
        if (comps.labels[i] == static_cast<int>(largest)) CHECK(out.mask[i]);
}
