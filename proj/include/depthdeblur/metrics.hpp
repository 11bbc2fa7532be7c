#pragma once

#include "depthdeblur/core_types.hpp"

#include <string>

namespace deblur {

struct EvalReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double flowErrorPct = 0.0;
  std::size_t validPixels = 0;

  std::string to_kv_text() const;
};

/// 10 log10(1 / MSE) with the MSE pooled over channels and valid pixels.
/// Identical inputs return +infinity.
double psnr(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b, const std::vector<std::uint8_t>& mask);

/// Mean structural similarity over fully-contained 11x11 windows with a
/// sigma = 1.5 Gaussian, K1 = 0.01, K2 = 0.03, dynamic range 1. Channels are
/// scored independently and averaged.
double ssim(const Image& a, const Image& b);

/// Percentage of mutually valid pixels whose endpoint error exceeds both
/// 3 pixels and 5% of the ground-truth magnitude. Not symmetric: the relative
/// threshold is taken from `truth`.
double flow_error_pct(const FlowField& estimated, const FlowField& truth);

EvalReport evaluate(const Image& result, const Image& clean,
                    const FlowField& estimated, const FlowField& truth);

}  // namespace deblur
