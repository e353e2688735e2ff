#pragma once

#include "mmreg/image.hpp"

namespace mmreg {

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 255.0;
};

struct MetricReport {
    double rmse = 0;
    double aaid = 0;
    double ssim = 1;
};

/// Root mean squared difference over every pixel-channel sample.
double rmse(const Image& a, const Image& b);

/// Mean absolute difference over every pixel-channel sample.
double aaid(const Image& a, const Image& b);

/// Mean SSIM over the valid region of a Gaussian window. RGB inputs are
/// compared on their grayscale conversion. l, c and s are evaluated
/// separately with c3 = c2 / 2 and unit exponents.
double ssim(const Image& a, const Image& b, const SsimParams& p = {});

MetricReport compare(const Image& a, const Image& b, const SsimParams& p = {});

}  // namespace mmreg
