#include "mmreg/pipeline.hpp"

#include "mmreg/error.hpp"
#include "mmreg/matching.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace mmreg {

namespace {

using json = nlohmann::json;

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

Image preprocess(const Image& img, const PipelineConfig& cfg) {
    if (!cfg.binarize) return img;
    const BinaryImage mask = binarize(to_grayscale(img), *cfg.binarize);
    return remove_small_components(mask, cfg.min_component_area).to_image();
}

std::vector<FeaturePoint> detect(const Image& gray, const PipelineConfig& cfg) {
    if (cfg.features == FeatureSource::fast) return detect_fast(gray, cfg.fast_threshold, cfg.fast_max_points);
    return detect_harris(gray, cfg.harris);
}

struct MatchingOutput {
    MatchSet candidates;
    std::vector<ScaleCount> features;
};

MatchingOutput match_detector_points(const Image& fixed_gray, const Image& moving_gray, const PipelineConfig& cfg) {
    MatchingOutput out;
    const auto fixed_pts = stage("features", [&] { return detect(fixed_gray, cfg); });
    const auto moving_pts = stage("features", [&] { return detect(moving_gray, cfg); });
    out.features.push_back({0, moving_pts.size(), fixed_pts.size()});

    out.candidates = stage("matching", [&] {
        if (moving_pts.empty() || fixed_pts.empty()) throw Error("no feature points detected");
        const auto dm = pairwise_distances(patch_descriptors(moving_gray, moving_pts, cfg.patch_radius),
                                           patch_descriptors(fixed_gray, fixed_pts, cfg.patch_radius));
        const auto kept = keep_top_fraction(select_row_minima(dm), cfg.top_fraction);
        MatchSet set;
        for (const auto& c : kept) {
            const auto& m = moving_pts[static_cast<std::size_t>(c.row)];
            const auto& f = fixed_pts[static_cast<std::size_t>(c.col)];
            set.push_back({{m.x, m.y}, {f.x, f.y}, c.distance});
        }
        return set;
    });
    return out;
}

MatchingOutput match_tensor_features(const Image& fixed, const Image& moving, const FeatureStack& tf,
                                     const FeatureStack& tm, const PipelineConfig& cfg) {
    stage("features", [&] {
        for (const auto* s : {&tf, &tm}) {
            if (s->source_w != kTensorSourceSize || s->source_h != kTensorSourceSize) {
                throw Error("tensor/source size mismatch");
            }
        }
        return 0;
    });

    MatchingOutput out;
    std::vector<ScaleCandidates> per_scale;
    stage("matching", [&] {
        for (const auto& mm : tm.maps) {
            const FeatureMapf* fm = tf.find(mm.scale_id);
            if (!fm) throw Error("unknown scale id " + std::to_string(mm.scale_id));
            const auto a = z_normalize(mm.cast<double>());
            const auto b = z_normalize(fm->cast<double>());
            const auto dm = pairwise_distances(a, b);
            per_scale.push_back({mm.scale_id, keep_top_fraction(select_row_minima(dm), cfg.top_fraction)});
            out.features.push_back({mm.scale_id, static_cast<std::size_t>(mm.cells()),
                                    static_cast<std::size_t>(fm->cells())});
        }
        out.candidates = pool_scales(per_scale, tm, tf);
        // Grid coordinates live in the resized CNN input; map back to each image.
        const Eigen::Vector2d ms(moving.width / static_cast<double>(tm.source_w),
                                 moving.height / static_cast<double>(tm.source_h));
        const Eigen::Vector2d fs(fixed.width / static_cast<double>(tf.source_w),
                                 fixed.height / static_cast<double>(tf.source_h));
        for (auto& m : out.candidates) {
            m.moving = m.moving.cwiseProduct(ms);
            m.fixed = m.fixed.cwiseProduct(fs);
        }
        return 0;
    });
    return out;
}

TransformModel fit_model(const MatchSet& inliers, const PipelineConfig& cfg) {
    const std::size_t need = cfg.transform == TransformKind::tps ? 3 : 2;
    if (inliers.size() < need) throw Error("too few matches");
    Points2<double> src(static_cast<Eigen::Index>(inliers.size()), 2);
    Points2<double> dst(static_cast<Eigen::Index>(inliers.size()), 2);
    for (std::size_t i = 0; i < inliers.size(); ++i) {
        src.row(static_cast<Eigen::Index>(i)) = inliers[i].moving.transpose();
        dst.row(static_cast<Eigen::Index>(i)) = inliers[i].fixed.transpose();
    }
    if (cfg.transform == TransformKind::tps) return fit_tps<double>(src, dst, cfg.lambda);
    return fit_similarity<double>(src, dst);
}

MetricRecord record(const MetricReport& m) {
    return {round_significant(m.rmse), round_significant(m.aaid), round_significant(m.ssim)};
}

json to_json(const MetricRecord& m) { return {{"rmse", m.rmse}, {"aaid", m.aaid}, {"ssim", m.ssim}}; }

MetricRecord metric_from(const json& j) {
    return {j.at("rmse").get<double>(), j.at("aaid").get<double>(), j.at("ssim").get<double>()};
}

json pair_array(const std::vector<std::array<double, 2>>& v) {
    json a = json::array();
    for (const auto& p : v) a.push_back({p[0], p[1]});
    return a;
}

std::vector<std::array<double, 2>> pair_array_from(const json& j) {
    std::vector<std::array<double, 2>> v;
    for (const auto& p : j) v.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return v;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::string to_string(FeatureSource s) {
    switch (s) {
        case FeatureSource::harris: return "harris";
        case FeatureSource::fast: return "fast";
        case FeatureSource::tensor: return "tensor";
    }
    return "?";
}

std::string to_string(TransformKind k) { return k == TransformKind::tps ? "tps" : "similarity"; }

std::string to_string(const std::optional<ThresholdMethod>& m) {
    if (!m) return "none";
    if (std::holds_alternative<OtsuThreshold>(*m)) return "otsu";
    return "fixed:" + std::to_string(std::get<FixedThreshold>(*m).value);
}

double round_significant(double v, int digits) {
    if (!std::isfinite(v) || v == 0.0) return v;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return std::strtod(buf, nullptr);
}

ConfigRecord describe(const PipelineConfig& cfg) {
    ConfigRecord c;
    c.fixed = cfg.fixed_path;
    c.moving = cfg.moving_path;
    c.features = to_string(cfg.features);
    c.tensor_fixed = cfg.tensor_fixed;
    c.tensor_moving = cfg.tensor_moving;
    c.binarize = to_string(cfg.binarize);
    c.min_area = cfg.min_component_area;
    c.top_fraction = cfg.top_fraction;
    c.radial_bins = cfg.shape_context.radial_bins;
    c.angular_bins = cfg.shape_context.angular_bins;
    c.r_min = cfg.shape_context.r_min;
    c.r_max = cfg.shape_context.r_max;
    c.transform = to_string(cfg.transform);
    c.lambda = cfg.lambda;
    c.out_dir = cfg.out_dir;
    c.seed = cfg.seed;
    return c;
}

TransformRecord describe(const TransformModel& model) {
    TransformRecord t;
    if (const auto* tps = std::get_if<TpsModeld>(&model)) {
        t.kind = "tps";
        t.lambda = tps->lambda;
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 3; ++c) t.affine.push_back(tps->affine(r, c));
        for (Eigen::Index i = 0; i < tps->control.rows(); ++i) {
            t.control_points.push_back({tps->control(i, 0), tps->control(i, 1)});
            t.radial_weights.push_back({tps->weights(i, 0), tps->weights(i, 1)});
        }
    } else {
        const auto& sim = std::get<SimilarityModeld>(model);
        t.kind = "similarity";
        t.scale = sim.scale;
        t.rotation = sim.rotation;
        t.translation = {sim.translation.x(), sim.translation.y()};
    }
    return t;
}

RegistrationResult register_images(const Image& fixed_in, const Image& moving_in, const PipelineConfig& cfg,
                                   const FeatureStack* tensor_fixed, const FeatureStack* tensor_moving) {
    stage("config", [&] {
        if (!(cfg.top_fraction > 0.0 && cfg.top_fraction <= 1.0)) throw Error("top_fraction must lie in (0, 1]");
        if (!(cfg.lambda >= 0.0)) throw Error("lambda must be nonnegative");
        if (cfg.features == FeatureSource::tensor && (!tensor_fixed || !tensor_moving)) {
            throw Error("tensor features require both FMAP stacks");
        }
        return 0;
    });

    RegistrationResult res;
    res.fixed = stage("preprocess", [&] { return preprocess(fixed_in, cfg); });
    res.moving = stage("preprocess", [&] { return preprocess(moving_in, cfg); });
    if (res.fixed.channels != res.moving.channels) {
        res.fixed = to_grayscale(res.fixed);
        res.moving = to_grayscale(res.moving);
    }
    const Image fixed_gray = to_grayscale(res.fixed);
    const Image moving_gray = to_grayscale(res.moving);

    MatchingOutput matched = cfg.features == FeatureSource::tensor
                                 ? match_tensor_features(res.fixed, res.moving, *tensor_fixed, *tensor_moving, cfg)
                                 : match_detector_points(fixed_gray, moving_gray, cfg);

    const auto corr = stage("correspondence", [&] { return refine_correspondences(matched.candidates, cfg.shape_context); });
    res.model = stage("transform", [&] { return fit_model(corr.inliers, cfg); });
    res.warped = stage("warp", [&] { return warp_image(res.moving, res.model, res.fixed.width, res.fixed.height); });

    auto& rep = res.report;
    stage("metrics", [&] {
        // Pre-registration: moving placed in the fixed frame without motion.
        const Image unregistered = warp_image(res.moving, SimilarityModeld{}, res.fixed.width, res.fixed.height);
        rep.pre = record(compare(res.fixed, unregistered));
        rep.post = record(compare(res.fixed, res.warped));
        return 0;
    });

    rep.config = describe(cfg);
    rep.counts.features = matched.features;
    rep.counts.candidates = matched.candidates.size();
    rep.counts.assigned = corr.assigned.size();
    rep.counts.inliers = corr.inliers.size();
    rep.channels = res.fixed.channels;
    rep.transform = describe(res.model);
    for (const auto& m : corr.inliers) {
        rep.inliers.push_back({m.moving.x(), m.moving.y(), m.fixed.x(), m.fixed.y(), m.score});
    }
    rep.outputs = {{"overlay", "overlay.png"}, {"report", "report.json"}, {"warped", "warped.png"}};
    return res;
}

Image make_overlay(const Image& fixed, const Image& warped) {
    const Image f = to_grayscale(fixed);
    const Image w = to_grayscale(warped);
    if (f.width != w.width || f.height != w.height) throw Error("dimension mismatch");
    Image out(f.width, f.height, 3);
    for (std::size_t i = 0; i < f.pixels.size(); ++i) {
        out.pixels[3 * i] = f.pixels[i];
        out.pixels[3 * i + 1] = w.pixels[i];
    }
    return out;
}

RegistrationReport run_registration(const PipelineConfig& cfg) {
    const Image fixed = stage("load", [&] { return load_image(cfg.fixed_path); });
    const Image moving = stage("load", [&] { return load_image(cfg.moving_path); });
    std::optional<FeatureStack> tf, tm;
    if (cfg.features == FeatureSource::tensor) {
        stage("features", [&] {
            tf = read_feature_stack(cfg.tensor_fixed);
            tm = read_feature_stack(cfg.tensor_moving);
            return 0;
        });
    }
    const RegistrationResult res = register_images(fixed, moving, cfg, tf ? &*tf : nullptr, tm ? &*tm : nullptr);

    stage("output", [&] {
        const std::filesystem::path dir(cfg.out_dir);
        std::filesystem::create_directories(dir);
        save_png(res.warped, dir / "warped.png");
        save_png(make_overlay(res.fixed, res.warped), dir / "overlay.png");
        emit_report(res.report, dir / "report.json");
        return 0;
    });
    return res.report;
}

std::string report_to_json(const RegistrationReport& r) {
    json j;
    const auto& c = r.config;
    j["config"] = {{"fixed", c.fixed},
                   {"moving", c.moving},
                   {"features", c.features},
                   {"tensor_fixed", c.tensor_fixed},
                   {"tensor_moving", c.tensor_moving},
                   {"binarize", c.binarize},
                   {"min_area", c.min_area},
                   {"top_fraction", c.top_fraction},
                   {"shape_context",
                    {{"radial_bins", c.radial_bins},
                     {"angular_bins", c.angular_bins},
                     {"r_min", c.r_min},
                     {"r_max", c.r_max}}},
                   {"transform", c.transform},
                   {"lambda", c.lambda},
                   {"out_dir", c.out_dir},
                   {"seed", c.seed}};

    json features = json::array();
    for (const auto& f : r.counts.features) features.push_back({{"scale", f.scale}, {"moving", f.moving}, {"fixed", f.fixed}});
    j["counts"] = {{"features", features},
                   {"candidates", r.counts.candidates},
                   {"assigned", r.counts.assigned},
                   {"inliers", r.counts.inliers}};

    j["metrics"] = {{"channels", r.channels}, {"pre", to_json(r.pre)}, {"post", to_json(r.post)}};

    const auto& t = r.transform;
    json tj = {{"kind", t.kind}};
    if (t.kind == "tps") {
        tj["lambda"] = t.lambda;
        tj["affine"] = {{t.affine.at(0), t.affine.at(1), t.affine.at(2)}, {t.affine.at(3), t.affine.at(4), t.affine.at(5)}};
        tj["control_points"] = pair_array(t.control_points);
        tj["radial_weights"] = pair_array(t.radial_weights);
    } else {
        tj["scale"] = t.scale;
        tj["rotation"] = t.rotation;
        tj["translation"] = {t.translation[0], t.translation[1]};
    }
    j["transform"] = tj;

    json matches = json::array();
    for (const auto& m : r.inliers) {
        matches.push_back({{"moving", {m.moving_x, m.moving_y}}, {"fixed", {m.fixed_x, m.fixed_y}}, {"score", m.score}});
    }
    j["inliers"] = matches;

    json outputs = json::object();
    for (const auto& [k, v] : r.outputs) outputs[k] = v;
    j["outputs"] = outputs;
    return j.dump(2) + "\n";
}

RegistrationReport report_from_json(const std::string& text) {
    const json j = json::parse(text);
    RegistrationReport r;
    const auto& c = j.at("config");
    r.config.fixed = c.at("fixed").get<std::string>();
    r.config.moving = c.at("moving").get<std::string>();
    r.config.features = c.at("features").get<std::string>();
    r.config.tensor_fixed = c.at("tensor_fixed").get<std::string>();
    r.config.tensor_moving = c.at("tensor_moving").get<std::string>();
    r.config.binarize = c.at("binarize").get<std::string>();
    r.config.min_area = c.at("min_area").get<int>();
    r.config.top_fraction = c.at("top_fraction").get<double>();
    const auto& sc = c.at("shape_context");
    r.config.radial_bins = sc.at("radial_bins").get<int>();
    r.config.angular_bins = sc.at("angular_bins").get<int>();
    r.config.r_min = sc.at("r_min").get<double>();
    r.config.r_max = sc.at("r_max").get<double>();
    r.config.transform = c.at("transform").get<std::string>();
    r.config.lambda = c.at("lambda").get<double>();
    r.config.out_dir = c.at("out_dir").get<std::string>();
    r.config.seed = c.at("seed").get<std::uint64_t>();

    const auto& counts = j.at("counts");
    for (const auto& f : counts.at("features")) {
        r.counts.features.push_back(
            {f.at("scale").get<std::uint32_t>(), f.at("moving").get<std::size_t>(), f.at("fixed").get<std::size_t>()});
    }
    r.counts.candidates = counts.at("candidates").get<std::size_t>();
    r.counts.assigned = counts.at("assigned").get<std::size_t>();
    r.counts.inliers = counts.at("inliers").get<std::size_t>();

    const auto& metrics = j.at("metrics");
    r.channels = metrics.at("channels").get<int>();
    r.pre = metric_from(metrics.at("pre"));
    r.post = metric_from(metrics.at("post"));

    const auto& t = j.at("transform");
    r.transform.kind = t.at("kind").get<std::string>();
    if (r.transform.kind == "tps") {
        r.transform.lambda = t.at("lambda").get<double>();
        for (const auto& row : t.at("affine"))
            for (const auto& v : row) r.transform.affine.push_back(v.get<double>());
        r.transform.control_points = pair_array_from(t.at("control_points"));
        r.transform.radial_weights = pair_array_from(t.at("radial_weights"));
    } else if (r.transform.kind == "similarity") {
        r.transform.scale = t.at("scale").get<double>();
        r.transform.rotation = t.at("rotation").get<double>();
        r.transform.translation = {t.at("translation").at(0).get<double>(), t.at("translation").at(1).get<double>()};
    } else {
        throw Error("unknown transform kind " + r.transform.kind);
    }

    for (const auto& m : j.at("inliers")) {
        r.inliers.push_back({m.at("moving").at(0).get<double>(), m.at("moving").at(1).get<double>(),
                             m.at("fixed").at(0).get<double>(), m.at("fixed").at(1).get<double>(),
                             m.at("score").get<double>()});
    }
    for (const auto& [k, v] : j.at("outputs").items()) r.outputs.emplace_back(k, v.get<std::string>());
    return r;
}

void emit_report(const RegistrationReport& r, const std::filesystem::path& path) {
    const std::string text = report_to_json(r);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("cannot write " + path.string());
}

SynthPair synth_pair(std::uint64_t seed, double deform_px) {
    if (!(deform_px >= 0)) throw Error("deform_px must be nonnegative");
    std::mt19937_64 rng(seed);
    const int n = kSynthSize;
    const double center = n / 2.0;

    struct Ellipse {
        double cx, cy, a, b, cos_t, sin_t;
    };
    const int count = 3 + static_cast<int>(uniform01(rng) * 6.0);
    std::vector<Ellipse> ellipses;
    for (int i = 0; i < count; ++i) {
        const double r = 35.0 * std::sqrt(uniform01(rng));
        const double phi = 2.0 * M_PI * uniform01(rng);
        const double theta = M_PI * uniform01(rng);
        ellipses.push_back({center + r * std::cos(phi), center + r * std::sin(phi), 18.0 + 27.0 * uniform01(rng),
                            10.0 + 20.0 * uniform01(rng), std::cos(theta), std::sin(theta)});
    }

    Image fixed(n, n, 1);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double px = x + 0.5;
            const double py = y + 0.5;
            for (const auto& e : ellipses) {
                const double dx = px - e.cx;
                const double dy = py - e.cy;
                const double u = (dx * e.cos_t + dy * e.sin_t) / e.a;
                const double v = (-dx * e.sin_t + dy * e.cos_t) / e.b;
                if (u * u + v * v <= 1.0) {
                    fixed.at(x, y) = 255;
                    break;
                }
            }
        }
    }
    for (auto& p : fixed.pixels)
        if (uniform01(rng) < 0.005) p = 255;

    // 4x4 control lattice with random displacements rescaled so the largest is deform_px.
    constexpr int kGrid = 4;
    Points2<double> src(kGrid * kGrid, 2);
    Points2<double> disp(kGrid * kGrid, 2);
    for (int gy = 0; gy < kGrid; ++gy) {
        for (int gx = 0; gx < kGrid; ++gx) {
            const int i = gy * kGrid + gx;
            src(i, 0) = 16.0 + gx * 64.0;
            src(i, 1) = 16.0 + gy * 64.0;
            const double r = std::sqrt(uniform01(rng));
            const double phi = 2.0 * M_PI * uniform01(rng);
            disp(i, 0) = r * std::cos(phi);
            disp(i, 1) = r * std::sin(phi);
        }
    }
    const double peak = disp.rowwise().norm().maxCoeff();
    if (peak > 0) disp *= deform_px / peak;

    SynthPair out;
    out.truth = fit_tps<double>(src, src + disp, 0.0);
    out.fixed = fixed;
    out.moving = deform_px == 0.0 ? fixed : warp_image(fixed, out.truth, n, n);
    return out;
}

RecoverySummary evaluate_recovery(const std::vector<std::uint64_t>& seeds, double deform_px,
                                  const PipelineConfig& cfg_template) {
    if (seeds.empty()) throw Error("no seeds given");
    RecoverySummary summary;
    std::size_t improved = 0;
    std::vector<double> post_ssim;
    for (const auto seed : seeds) {
        const SynthPair pair = synth_pair(seed, deform_px);
        PipelineConfig cfg = cfg_template;
        const std::filesystem::path dir = std::filesystem::path(cfg_template.out_dir) / ("seed_" + std::to_string(seed));
        std::filesystem::create_directories(dir);
        cfg.fixed_path = (dir / "fixed.png").string();
        cfg.moving_path = (dir / "moving.png").string();
        cfg.out_dir = dir.string();
        cfg.seed = seed;
        save_png(pair.fixed, cfg.fixed_path);
        save_png(pair.moving, cfg.moving_path);

        RecoveryRow row;
        row.seed = seed;
        try {
            const RegistrationReport rep = run_registration(cfg);
            row.ok = true;
            row.pre = rep.pre;
            row.post = rep.post;
            row.improved = deform_px == 0.0 || (row.post.rmse < row.pre.rmse && row.post.aaid < row.pre.aaid &&
                                                row.post.ssim > row.pre.ssim);
        } catch (const Error& e) {
            row.error = e.what();
            // An unregistered pair is what the caller is left with.
            try {
                const auto m = record(compare(preprocess(pair.fixed, cfg), preprocess(pair.moving, cfg)));
                row.pre = m;
                row.post = m;
            } catch (const Error&) {
            }
        }
        improved += row.improved ? 1 : 0;
        post_ssim.push_back(row.post.ssim);
        summary.rows.push_back(std::move(row));
    }
    summary.improvement_fraction = static_cast<double>(improved) / static_cast<double>(seeds.size());
    std::sort(post_ssim.begin(), post_ssim.end());
    const std::size_t m = post_ssim.size();
    summary.median_post_ssim = m % 2 ? post_ssim[m / 2] : 0.5 * (post_ssim[m / 2 - 1] + post_ssim[m / 2]);
    return summary;
}

}  // namespace mmreg
