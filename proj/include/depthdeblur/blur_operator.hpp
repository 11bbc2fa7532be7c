#pragma once

#include "depthdeblur/core_types.hpp"
#include "depthdeblur/geometry.hpp"

namespace deblur {

/// Linear warp-and-average blur operator: the mean over 2N+1 backward warps
/// of the latent image at poses uniformly spanning the exposure (endpoints
/// +-p/2). Bilinear taps are cached per time sample at build time so the
/// solvers can apply the operator and its exact adjoint repeatedly without
/// re-projecting. Immutable once built; rebuild whenever the pose changes.
class BlurOperator {
 public:
  struct SampleTaps {
    // base < 0 marks an invalid tap (invalid depth or footprint out of bounds);
    // otherwise base indexes the top-left corner of the 2x2 bilinear footprint
    // and (ax, ay) are the fractional weights.
    std::vector<std::int32_t> base;
    std::vector<double> ax;
    std::vector<double> ay;
  };

  static BlurOperator build(const Pose6& p, const DepthMap& depth, const Intrinsics& K, int N);

  int height() const { return height_; }
  int width() const { return width_; }
  int half_samples() const { return N_; }
  int sample_count() const { return 2 * N_ + 1; }
  const Pose6& pose() const { return pose_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }

  /// out = mean over the valid samples at each pixel (0 where none is valid).
  /// On strictly valid pixels this is exactly (1/(2N+1)) * sum of warps.
  void apply_plane(const double* in, double* out) const;

  /// Exact transpose of apply_plane under the standard inner product.
  void apply_adjoint_plane(const double* in, double* out) const;

  std::pair<Image, std::vector<std::uint8_t>> apply(const Image& latent) const;
  RawImage apply_adjoint(const RawImage& residual) const;

  /// True where every time sample is valid; energy sums are restricted here.
  const std::vector<std::uint8_t>& valid_mask() const { return strict_; }
  const std::vector<std::uint16_t>& valid_sample_count() const { return count_; }

  const SampleTaps& sample(int i) const { return samples_[i]; }

 private:
  int height_ = 0;
  int width_ = 0;
  int N_ = 0;
  Pose6 pose_;
  std::vector<SampleTaps> samples_;
  std::vector<std::uint16_t> count_;
  std::vector<std::uint8_t> strict_;
};

}  // namespace deblur
