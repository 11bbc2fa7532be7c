#include "depthdeblur/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace deblur {

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;  // (K1 * range)^2
constexpr double kSsimC2 = 0.03 * 0.03;

std::vector<double> ssim_kernel() {
  std::vector<double> k(kSsimWindow * kSsimWindow);
  const int r = kSsimWindow / 2;
  double sum = 0.0;
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * kSsimSigma * kSsimSigma));
      k[(y + r) * kSsimWindow + (x + r)] = v;
      sum += v;
    }
  }
  for (double& v : k) {
    v /= sum;
  }
  return k;
}

}  // namespace

std::string EvalReport::to_kv_text() const {
  std::ostringstream os;
  os.precision(10);
  if (std::isinf(psnr)) {
    os << "psnr=inf\n";
  } else {
    os << "psnr=" << psnr << "\n";
  }
  os << "ssim=" << ssim << "\n";
  os << "flowErrorPct=" << flowErrorPct << "\n";
  os << "validPixels=" << validPixels << "\n";
  return os.str();
}

double psnr(const Image& a, const Image& b) {
  return psnr(a, b, std::vector<std::uint8_t>(a.pixels(), 1));
}

double psnr(const Image& a, const Image& b, const std::vector<std::uint8_t>& mask) {
  if (!a.same_shape(b)) {
    throw DimensionMismatch("psnr inputs differ in shape");
  }
  if (mask.size() != a.pixels()) {
    throw DimensionMismatch("psnr mask does not match image size");
  }
  double sq = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < a.channels(); ++c) {
    const double* pa = a.plane(c);
    const double* pb = b.plane(c);
    for (std::size_t i = 0; i < a.pixels(); ++i) {
      if (!mask[i]) {
        continue;
      }
      const double d = pa[i] - pb[i];
      sq += d * d;
      ++count;
    }
  }
  if (count == 0) {
    throw ValidationError("psnr has no valid pixels");
  }
  const double mse = sq / static_cast<double>(count);
  if (mse == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw DimensionMismatch("ssim inputs differ in shape");
  }
  if (a.height() < kSsimWindow || a.width() < kSsimWindow) {
    throw ImageTooSmall("ssim needs images of at least 11x11");
  }
  static const std::vector<double> kernel = ssim_kernel();
  const int h = a.height();
  const int w = a.width();
  const int r = kSsimWindow / 2;

  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    const double* pa = a.plane(c);
    const double* pb = b.plane(c);
    double acc = 0.0;
    std::size_t windows = 0;
    for (int y = r; y < h - r; ++y) {
      for (int x = r; x < w - r; ++x) {
        double mua = 0.0, mub = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const std::size_t row = static_cast<std::size_t>(y + dy) * w + x;
          const double* krow = kernel.data() + (dy + r) * kSsimWindow + r;
          for (int dx = -r; dx <= r; ++dx) {
            const double kv = krow[dx];
            const double va = pa[row + dx];
            const double vb = pb[row + dx];
            mua += kv * va;
            mub += kv * vb;
            saa += kv * va * va;
            sbb += kv * vb * vb;
            sab += kv * va * vb;
          }
        }
        const double vara = saa - mua * mua;
        const double varb = sbb - mub * mub;
        const double cov = sab - mua * mub;
        const double num = (2.0 * mua * mub + kSsimC1) * (2.0 * cov + kSsimC2);
        const double den = (mua * mua + mub * mub + kSsimC1) * (vara + varb + kSsimC2);
        acc += num / den;
        ++windows;
      }
    }
    total += acc / static_cast<double>(windows);
  }
  return total / a.channels();
}

double flow_error_pct(const FlowField& estimated, const FlowField& truth) {
  if (estimated.height != truth.height || estimated.width != truth.width) {
    throw DimensionMismatch("flow fields differ in shape");
  }
  std::size_t valid = 0;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < truth.pixels(); ++i) {
    if (!estimated.valid[i] || !truth.valid[i]) {
      continue;
    }
    ++valid;
    const double eu = estimated.du[i] - truth.du[i];
    const double ev = estimated.dv[i] - truth.dv[i];
    const double epe = std::hypot(eu, ev);
    const double mag = std::hypot(truth.du[i], truth.dv[i]);
    if (epe > 3.0 && epe > 0.05 * mag) {
      ++bad;
    }
  }
  if (valid == 0) {
    throw ValidationError("flow error has no valid pixels");
  }
  return 100.0 * static_cast<double>(bad) / static_cast<double>(valid);
}

EvalReport evaluate(const Image& result, const Image& clean,
                    const FlowField& estimated, const FlowField& truth) {
  EvalReport report;
  report.psnr = psnr(result, clean);
  report.ssim = ssim(result, clean);
  report.flowErrorPct = flow_error_pct(estimated, truth);
  std::size_t n = 0;
  for (std::size_t i = 0; i < truth.pixels(); ++i) {
    if (estimated.valid[i] && truth.valid[i]) {
      ++n;
    }
  }
  report.validPixels = n;
  return report;
}

}  // namespace deblur
