#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "semo/sprite.hpp"

namespace semo {

struct metric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// PSNR in dB over the pooled MSE of all frames; dynamic range 1.0,
// capped at 99 dB for identical inputs.
double psnr(const std::vector<Frame>& a, const std::vector<Frame>& b);
double psnr(const Frame& a, const Frame& b);

// Mean SSIM, 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03, L=1,
// computed per channel on valid window positions and averaged over
// channels and frames.
double ssim(const std::vector<Frame>& a, const std::vector<Frame>& b);
double ssim(const Frame& a, const Frame& b);

// Mean absolute pixel error.
double l1(const std::vector<Frame>& a, const std::vector<Frame>& b);
double l1(const Frame& a, const Frame& b);

struct ClipMetrics {
    double psnr = 0, ssim = 0, l1 = 0;
};

struct MetricReport {
    double psnr = 0, ssim = 0, l1 = 0;  // means over clips
    std::vector<ClipMetrics> per_clip;
};

MetricReport metric_report(const std::vector<std::vector<Frame>>& a,
                           const std::vector<std::vector<Frame>>& b);

}  // namespace semo
