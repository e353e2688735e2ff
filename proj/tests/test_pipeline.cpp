#include "oracles.hpp"

#include "mmreg/error.hpp"
#include "mmreg/pipeline.hpp"

#include <doctest.h>

#include <fstream>

using namespace mmreg;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "mmreg_test_pipeline" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("synth_pair") {
    const auto still = synth_pair(3, 0.0);
    CHECK(still.moving == still.fixed);
    CHECK(still.fixed.width == kSynthSize);
    const auto a = synth_pair(5, 10.0), b = synth_pair(5, 10.0);
    CHECK(a.fixed == b.fixed);
    CHECK(a.moving == b.moving);
    CHECK(a.truth.weights == b.truth.weights);
    CHECK(aaid(a.fixed, a.moving) > 0);
    CHECK(synth_pair(6, 10.0).fixed != a.fixed);
    for (auto v : a.fixed.pixels) CHECK((v == 0 || v == 255));

    // Control displacements peak at the requested magnitude.
    double peak = 0;
    for (Eigen::Index i = 0; i < a.truth.control.rows(); ++i) {
        const Vec2<double> c = a.truth.control.row(i).transpose();
        peak = std::max(peak, (apply_tps(a.truth, c) - c).norm());
    }
    CHECK(peak == doctest::Approx(10.0).epsilon(1e-6));
    CHECK_THROWS_AS(synth_pair(1, -1.0), Error);
}

TEST_CASE("self-registration is near perfect") {
    const Image img = synth_pair(2, 0.0).fixed;
    for (auto kind : {TransformKind::similarity, TransformKind::tps}) {
        PipelineConfig cfg;
        cfg.transform = kind;
        const auto res = register_images(img, img, cfg);
        CHECK(res.report.post.ssim >= 0.99);
        CHECK(res.report.post.rmse < 1e-6);
        if (kind == TransformKind::similarity) {
            const auto& s = std::get<SimilarityModeld>(res.model);
            CHECK(std::abs(s.scale - 1) < 1e-3);
            CHECK(std::abs(s.rotation) < 1e-3);
            CHECK(s.translation.norm() < 1e-2);
        } else {
            // Control points of an undeformed pair barely move.
            const auto& t = std::get<TpsModeld>(res.model);
            double sum = 0;
            for (Eigen::Index i = 0; i < t.control.rows(); ++i) {
                const Vec2<double> c = t.control.row(i).transpose();
                sum += (apply_tps(t, c) - c).norm();
            }
            CHECK(sum / static_cast<double>(t.control.rows()) < 0.5);
        }
        const auto& c = res.report.counts;
        CHECK(c.inliers <= c.assigned);
        CHECK(c.assigned <= c.candidates);
    }
}

TEST_CASE("registration of a mildly warped synthetic pair improves all metrics") {
    const auto pair = synth_pair(1, 10.0);
    const auto res = register_images(pair.fixed, pair.moving, PipelineConfig{});
    const auto& r = res.report;
    CHECK(r.post.rmse < r.pre.rmse);
    CHECK(r.post.aaid < r.pre.aaid);
    CHECK(r.post.ssim > r.pre.ssim);
    CHECK(r.counts.inliers <= r.counts.assigned);
    CHECK(r.counts.assigned <= r.counts.candidates);
    CHECK(r.counts.inliers == r.inliers.size());
    CHECK(res.warped.width == pair.fixed.width);
}

TEST_CASE("tensor features validate the source size") {
    const Image img = synth_pair(0, 0.0).fixed;
    FeatureStack s;
    s.source_w = 100;
    s.source_h = 224;
    s.maps.emplace_back(0, 1, 7, 7);
    PipelineConfig cfg;
    cfg.features = FeatureSource::tensor;
    CHECK_THROWS_WITH_AS(register_images(img, img, cfg, &s, &s), doctest::Contains("tensor/source size mismatch"),
                         StageError);
    CHECK_THROWS_AS(register_images(img, img, cfg), StageError);
}

TEST_CASE("errors carry the stage name") {
    PipelineConfig cfg;
    cfg.fixed_path = "/nonexistent/a.png";
    cfg.moving_path = "/nonexistent/b.png";
    try {
        run_registration(cfg);
        FAIL("expected an error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "load");
        CHECK(std::string(e.what()).rfind("load: ", 0) == 0);
    }
    const Image blank(32, 32, 1, 0);
    try {
        register_images(blank, blank, PipelineConfig{});
        FAIL("expected an error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "preprocess");
    }
    cfg.top_fraction = 0;
    CHECK_THROWS_AS(register_images(blank, blank, cfg), StageError);
}

TEST_CASE("run_registration writes outputs and is deterministic") {
    const auto dir = scratch("run");
    const auto pair = synth_pair(7, 8.0);
    save_png(pair.fixed, dir / "fixed.png");
    save_png(pair.moving, dir / "moving.png");
    PipelineConfig cfg;
    cfg.fixed_path = (dir / "fixed.png").string();
    cfg.moving_path = (dir / "moving.png").string();
    cfg.out_dir = (dir / "out").string();
    cfg.seed = 7;
    const auto rep = run_registration(cfg);
    const std::string json1 = slurp(dir / "out" / "report.json");
    const std::string warped1 = slurp(dir / "out" / "warped.png");
    const std::string overlay1 = slurp(dir / "out" / "overlay.png");
    CHECK(!json1.empty());
    const auto again = run_registration(cfg);
    CHECK(again == rep);
    CHECK(slurp(dir / "out" / "report.json") == json1);
    CHECK(slurp(dir / "out" / "warped.png") == warped1);
    CHECK(slurp(dir / "out" / "overlay.png") == overlay1);

    CHECK(report_from_json(json1) == rep);
    const Image overlay = load_image(dir / "out" / "overlay.png");
    CHECK(overlay.channels == 3);
    const Image warped = load_image(dir / "out" / "warped.png");
    for (std::size_t i = 0; i < warped.pixels.size(); ++i) CHECK(overlay.pixels[3 * i + 1] == warped.pixels[i]);
}

TEST_CASE("report JSON round-trip") {
    RegistrationReport r;
    r.config = describe(PipelineConfig{});
    r.counts.features = {{0, 120, 131}, {3, 5, 6}};
    r.counts.candidates = 24;
    r.counts.assigned = 20;
    r.counts.inliers = 11;
    r.pre = {39.1548, 6.01206, 0.915};
    r.post = {round_significant(1.0 / 3.0), round_significant(2.0 / 3.0), 0.999999};
    r.transform = describe(TransformModel{synth_pair(3, 10.0).truth});
    r.inliers = {{1.0 / 3.0, 2.5, 7.125, 1e-17, 0.1}};
    r.outputs = {{"overlay", "overlay.png"}, {"report", "report.json"}, {"warped", "warped.png"}};
    CHECK(report_from_json(report_to_json(r)) == r);

    SimilarityModeld s;
    s.scale = 1.25;
    s.rotation = -0.3;
    s.translation = {4, -2};
    r.transform = describe(TransformModel{s});
    CHECK(report_from_json(report_to_json(r)) == r);
    CHECK(report_to_json(r) == report_to_json(r));

    CHECK_THROWS_AS(emit_report(r, "/nonexistent_dir/deeper/report.json"), Error);
}

TEST_CASE("round_significant") {
    CHECK(round_significant(0.123456789) == 0.123457);
    CHECK(round_significant(123456789.0) == 123457000.0);
    CHECK(round_significant(0.0) == 0.0);
    CHECK(round_significant(-2.5e-7, 2) == -2.5e-7);
}

TEST_CASE("evaluate_recovery") {
    const auto dir = scratch("recovery");
    PipelineConfig cfg;
    cfg.out_dir = dir.string();
    const auto still = evaluate_recovery({0, 1}, 0.0, cfg);
    CHECK(still.improvement_fraction == 1.0);
    REQUIRE(still.rows.size() == 2);
    CHECK(std::filesystem::exists(dir / "seed_1" / "report.json"));
    CHECK(still.median_post_ssim >= 0.99);
    CHECK_THROWS_AS(evaluate_recovery({}, 10.0, cfg), Error);
}

TEST_CASE("tensor path through pooled grid features") {
    // Feature maps whose channels encode the cell position, identical for
    // both images: every cell matches itself.
    FeatureStack s;
    s.source_w = s.source_h = kTensorSourceSize;
    for (int g : {28, 14, 7}) {
        FeatureMapf m(static_cast<std::uint32_t>(g), 2, g, g);
        for (int r = 0; r < g; ++r)
            for (int c = 0; c < g; ++c) {
                m.at(0, r, c) = static_cast<float>(c);
                m.at(1, r, c) = static_cast<float>(r * r);
            }
        s.maps.push_back(m);
    }
    const Image img = synth_pair(4, 0.0).fixed;
    PipelineConfig cfg;
    cfg.features = FeatureSource::tensor;
    const auto res = register_images(img, img, cfg, &s, &s);
    CHECK(res.report.counts.features.size() == 3);
    CHECK(res.report.counts.candidates > 0);
    CHECK(res.report.post.ssim >= 0.99);
}
