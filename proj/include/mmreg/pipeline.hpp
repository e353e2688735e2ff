#pragma once

#include "mmreg/correspondence.hpp"
#include "mmreg/features.hpp"
#include "mmreg/image.hpp"
#include "mmreg/metrics.hpp"
#include "mmreg/transform.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mmreg {

enum class FeatureSource { harris, fast, tensor };
enum class TransformKind { tps, similarity };

/// Side length CNN activations are computed at; FMAP inputs must reference it.
inline constexpr std::uint32_t kTensorSourceSize = 224;

struct PipelineConfig {
    std::string fixed_path;
    std::string moving_path;

    FeatureSource features = FeatureSource::harris;
    std::string tensor_fixed;
    std::string tensor_moving;

    std::optional<ThresholdMethod> binarize = OtsuThreshold{};  ///< nullopt = no binarization
    int min_component_area = 20;
    double top_fraction = 0.20;
    ShapeContextParams shape_context;

    TransformKind transform = TransformKind::tps;
    double lambda = 0.0;

    HarrisParams harris;
    int fast_threshold = 20;
    int fast_max_points = 400;
    int patch_radius = 7;   ///< appearance descriptor half-width for detector features

    std::string out_dir = "out";
    std::uint64_t seed = 0;
};

struct ScaleCount {
    std::uint32_t scale = 0;
    std::size_t moving = 0;
    std::size_t fixed = 0;

    friend bool operator==(const ScaleCount&, const ScaleCount&) = default;
};

struct StageCounts {
    std::vector<ScaleCount> features;
    std::size_t candidates = 0;
    std::size_t assigned = 0;
    std::size_t inliers = 0;

    friend bool operator==(const StageCounts&, const StageCounts&) = default;
};

struct ReportMatch {
    double moving_x = 0, moving_y = 0;
    double fixed_x = 0, fixed_y = 0;
    double score = 0;

    friend bool operator==(const ReportMatch&, const ReportMatch&) = default;
};

/// Transform parameters in report form.
struct TransformRecord {
    std::string kind;  ///< "tps" or "similarity"
    double lambda = 0;
    std::vector<double> affine;                       ///< 2x3 row-major (tps)
    std::vector<std::array<double, 2>> control_points;
    std::vector<std::array<double, 2>> radial_weights;
    double scale = 1;                                 ///< similarity
    double rotation = 0;
    std::array<double, 2> translation{0, 0};

    friend bool operator==(const TransformRecord&, const TransformRecord&) = default;
};

struct MetricRecord {
    double rmse = 0;
    double aaid = 0;
    double ssim = 0;

    friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

struct ConfigRecord {
    std::string fixed;
    std::string moving;
    std::string features;
    std::string tensor_fixed;
    std::string tensor_moving;
    std::string binarize;
    int min_area = 0;
    double top_fraction = 0;
    int radial_bins = 0;
    int angular_bins = 0;
    double r_min = 0;
    double r_max = 0;
    std::string transform;
    double lambda = 0;
    std::string out_dir;
    std::uint64_t seed = 0;

    friend bool operator==(const ConfigRecord&, const ConfigRecord&) = default;
};

struct RegistrationReport {
    ConfigRecord config;
    StageCounts counts;
    int channels = 1;
    MetricRecord pre;
    MetricRecord post;
    TransformRecord transform;
    std::vector<ReportMatch> inliers;
    std::vector<std::pair<std::string, std::string>> outputs;  ///< name -> file name inside out_dir

    friend bool operator==(const RegistrationReport&, const RegistrationReport&) = default;
};

/// In-memory result of one registration, including the images written to disk.
struct RegistrationResult {
    RegistrationReport report;
    TransformModel model;
    Image fixed;       ///< preprocessed fixed image
    Image moving;      ///< preprocessed moving image
    Image warped;      ///< moving resampled into the fixed frame
};

/// Rounds to 6 significant digits, the precision metrics are reported at.
double round_significant(double v, int digits = 6);

ConfigRecord describe(const PipelineConfig& cfg);
TransformRecord describe(const TransformModel& m);

/// Registers two in-memory images; tensor stacks are required for FeatureSource::tensor.
RegistrationResult register_images(const Image& fixed, const Image& moving, const PipelineConfig& cfg,
                                   const FeatureStack* tensor_fixed = nullptr,
                                   const FeatureStack* tensor_moving = nullptr);

/// Loads the configured inputs, registers them and writes warped.png,
/// overlay.png and report.json into cfg.out_dir.
RegistrationReport run_registration(const PipelineConfig& cfg);

std::string report_to_json(const RegistrationReport& r);
RegistrationReport report_from_json(const std::string& text);
void emit_report(const RegistrationReport& r, const std::filesystem::path& path);

/// Fixed image in red, warped moving image in green.
Image make_overlay(const Image& fixed, const Image& warped);

struct SynthPair {
    Image fixed;
    Image moving;
    TpsModeld truth;   ///< maps fixed-image coordinates to moving-image coordinates
};

inline constexpr int kSynthSize = 224;

/// Seeded binary aggregate (3-8 overlapping ellipses plus 0.5% salt noise)
/// and a copy warped by a random TPS whose control displacements peak at deform_px.
SynthPair synth_pair(std::uint64_t seed, double deform_px);

struct RecoveryRow {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricRecord pre;
    MetricRecord post;
    bool improved = false;
};

struct RecoverySummary {
    std::vector<RecoveryRow> rows;
    double improvement_fraction = 0;
    double median_post_ssim = 0;
};

/// Runs synth_pair + run_registration per seed (files under cfg.out_dir/seed_<n>).
/// A seed whose registration fails counts as not improved.
RecoverySummary evaluate_recovery(const std::vector<std::uint64_t>& seeds, double deform_px,
                                  const PipelineConfig& cfg_template);

std::string to_string(FeatureSource s);
std::string to_string(TransformKind k);
std::string to_string(const std::optional<ThresholdMethod>& m);

}  // namespace mmreg
