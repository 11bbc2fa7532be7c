#include "depthdeblur/blur_operator.hpp"

#include <algorithm>
#include <cstring>

namespace deblur {

BlurOperator BlurOperator::build(const Pose6& p, const DepthMap& depth,
                                 const Intrinsics& K, int N) {
  if (N < 1) {
    throw ValidationError("blur operator needs N >= 1");
  }
  if (p.theta.norm() > kMaxRotationNorm) {
    throw AngleTooLarge("rotation magnitude exceeds the small-motion bound of 0.5 rad");
  }

  BlurOperator op;
  op.height_ = depth.height();
  op.width_ = depth.width();
  op.N_ = N;
  op.pose_ = p;

  const int h = op.height_;
  const int w = op.width_;
  const std::size_t n = op.pixels();
  op.samples_.resize(2 * N + 1);
  op.count_.assign(n, 0);

  for (int s = -N; s <= N; ++s) {
    SampleTaps& taps = op.samples_[s + N];
    taps.base.assign(n, -1);
    taps.ax.assign(n, 0.0);
    taps.ay.assign(n, 0.0);

    const Pose6 ps = pose_at_time(p, static_cast<double>(s) / N);
    const bool identity = ps.is_zero();
    const Mat3 R = small_rotation(ps.theta);
    const Vec3& t = ps.v;

    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!depth.valid_at(y, x)) {
          continue;
        }
        double sx = x, sy = y;
        if (!identity && !project_pixel(R, t, K, x, y, depth.at(y, x), sx, sy)) {
          continue;
        }
        BilinearTap tap;
        if (!bilinear_tap(sx, sy, w, h, tap)) {
          continue;
        }
        taps.base[i] = static_cast<std::int32_t>(tap.y0) * w + tap.x0;
        taps.ax[i] = tap.ax;
        taps.ay[i] = tap.ay;
        ++op.count_[i];
      }
    }
  }

  op.strict_.assign(n, 0);
  const std::uint16_t full = static_cast<std::uint16_t>(2 * N + 1);
  for (std::size_t i = 0; i < n; ++i) {
    op.strict_[i] = (op.count_[i] == full) ? 1 : 0;
  }
  return op;
}

void BlurOperator::apply_plane(const double* in, double* out) const {
  const std::size_t n = pixels();
  const int w = width_;
  std::fill(out, out + n, 0.0);
  for (const SampleTaps& taps : samples_) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::int32_t b = taps.base[i];
      if (b < 0) {
        continue;
      }
      const double ax = taps.ax[i];
      const double ay = taps.ay[i];
      const double top = (1.0 - ax) * in[b] + ax * in[b + 1];
      const double bot = (1.0 - ax) * in[b + w] + ax * in[b + w + 1];
      out[i] += (1.0 - ay) * top + ay * bot;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = count_[i] ? out[i] / count_[i] : 0.0;
  }
}

void BlurOperator::apply_adjoint_plane(const double* in, double* out) const {
  const std::size_t n = pixels();
  const int w = width_;
  std::fill(out, out + n, 0.0);
  for (const SampleTaps& taps : samples_) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::int32_t b = taps.base[i];
      if (b < 0) {
        continue;
      }
      const double r = in[i] / count_[i];
      const double ax = taps.ax[i];
      const double ay = taps.ay[i];
      out[b] += r * (1.0 - ax) * (1.0 - ay);
      out[b + 1] += r * ax * (1.0 - ay);
      out[b + w] += r * (1.0 - ax) * ay;
      out[b + w + 1] += r * ax * ay;
    }
  }
}

std::pair<Image, std::vector<std::uint8_t>> BlurOperator::apply(const Image& latent) const {
  if (latent.height() != height_ || latent.width() != width_) {
    throw DimensionMismatch("latent image does not match operator dimensions");
  }
  const std::size_t n = pixels();
  std::vector<double> out(n * latent.channels());
  for (int c = 0; c < latent.channels(); ++c) {
    apply_plane(latent.plane(c), out.data() + static_cast<std::size_t>(c) * n);
  }
  return {Image::clamped(height_, width_, latent.channels(), std::move(out)), strict_};
}

RawImage BlurOperator::apply_adjoint(const RawImage& residual) const {
  if (residual.height != height_ || residual.width != width_) {
    throw DimensionMismatch("residual does not match operator dimensions");
  }
  RawImage out(height_, width_, residual.channels);
  for (int c = 0; c < residual.channels; ++c) {
    apply_adjoint_plane(residual.plane(c), out.plane(c));
  }
  return out;
}

}  // namespace deblur
