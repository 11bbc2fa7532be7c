#include "depthdeblur/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace deblur {

namespace {

std::size_t expected_size(int height, int width, int channels) {
  return static_cast<std::size_t>(height) * width * channels;
}

void check_image_shape(int height, int width, int channels) {
  if (height <= 0 || width <= 0) {
    throw ValidationError("image dimensions must be positive");
  }
  if (channels != 1 && channels != 3) {
    throw ValidationError("image channels must be 1 or 3");
  }
}

}  // namespace

Image::Image(int height, int width, int channels)
    : height_(height), width_(width), channels_(channels),
      data_(expected_size(height, width, channels), 0.0) {
  check_image_shape(height, width, channels);
}

Image::Image(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_image_shape(height, width, channels);
  if (data_.size() != expected_size(height, width, channels)) {
    throw DimensionMismatch("image data length does not match height*width*channels");
  }
  for (double v : data_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw ValidationError("image intensities must be finite and in [0,1]");
    }
  }
}

Image Image::clamped(int height, int width, int channels, std::vector<double> data) {
  check_image_shape(height, width, channels);
  if (data.size() != expected_size(height, width, channels)) {
    throw DimensionMismatch("image data length does not match height*width*channels");
  }
  for (double& v : data) {
    if (!std::isfinite(v)) {
      throw ValidationError("image intensities must be finite");
    }
    v = std::clamp(v, 0.0, 1.0);
  }
  Image img;
  img.height_ = height;
  img.width_ = width;
  img.channels_ = channels;
  img.data_ = std::move(data);
  return img;
}

Image Image::to_gray() const {
  if (channels_ == 1) {
    return *this;
  }
  std::vector<double> gray(pixels());
  const double* r = plane(0);
  const double* g = plane(1);
  const double* b = plane(2);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  }
  return Image::clamped(height_, width_, 1, std::move(gray));
}

DepthMap::DepthMap(int height, int width, std::vector<double> depth,
                   std::vector<std::uint8_t> valid)
    : height_(height), width_(width), depth_(std::move(depth)), valid_(std::move(valid)) {
  if (height <= 0 || width <= 0) {
    throw ValidationError("depth dimensions must be positive");
  }
  const std::size_t n = pixels();
  if (depth_.size() != n || valid_.size() != n) {
    throw DimensionMismatch("depth data length does not match height*width");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (valid_[i] && (!std::isfinite(depth_[i]) || depth_[i] <= 0.0)) {
      throw NonPositiveDepth("valid depth entries must be finite and > 0");
    }
  }
}

DepthMap::DepthMap(int height, int width, std::vector<double> depth)
    : DepthMap(height, width, std::move(depth),
               std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 1)) {}

DepthMap DepthMap::constant(int height, int width, double z) {
  return DepthMap(height, width,
                  std::vector<double>(static_cast<std::size_t>(height) * width, z));
}

std::size_t DepthMap::valid_count() const {
  std::size_t n = 0;
  for (std::uint8_t v : valid_) {
    n += v ? 1 : 0;
  }
  return n;
}

double DepthMap::mean_valid() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < depth_.size(); ++i) {
    if (valid_[i]) {
      sum += depth_[i];
      ++n;
    }
  }
  if (n == 0) {
    throw ValidationError("depth map has no valid pixel");
  }
  return sum / static_cast<double>(n);
}

std::pair<double, double> DepthMap::valid_range() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < depth_.size(); ++i) {
    if (valid_[i]) {
      lo = std::min(lo, depth_[i]);
      hi = std::max(hi, depth_[i]);
    }
  }
  if (!(lo <= hi)) {
    throw ValidationError("depth map has no valid pixel");
  }
  return {lo, hi};
}

Pose6::Pose6(const Vec3& theta_in, const Vec3& v_in) : theta(theta_in), v(v_in) {
  if (!theta.allFinite() || !v.allFinite()) {
    throw ValidationError("pose components must be finite");
  }
}

Pose6 Pose6::from_vector(const Vec6& p) {
  return Pose6(p.head<3>(), p.tail<3>());
}

Vec6 Pose6::to_vector() const {
  Vec6 p;
  p << theta, v;
  return p;
}

double Pose6::norm() const { return std::sqrt(squared_norm()); }

Pose6 operator*(double s, const Pose6& p) { return Pose6(s * p.theta, s * p.v); }

Pose6 operator-(const Pose6& p) { return Pose6(-p.theta, -p.v); }

Pose6 operator+(const Pose6& a, const Pose6& b) {
  return Pose6(a.theta + b.theta, a.v + b.v);
}

Intrinsics::Intrinsics(double fx_in, double fy_in, double cx_in, double cy_in)
    : fx(fx_in), fy(fy_in), cx(cx_in), cy(cy_in) {
  if (!(std::isfinite(fx) && std::isfinite(fy) && fx > 0.0 && fy > 0.0)) {
    throw ValidationError("focal lengths must be finite and positive");
  }
  if (!(std::isfinite(cx) && std::isfinite(cy) && cx >= 0.0 && cy >= 0.0)) {
    throw ValidationError("principal point must be finite and non-negative");
  }
}

Intrinsics Intrinsics::scaled(double sx, double sy) const {
  return Intrinsics(fx * sx, fy * sy, (cx + 0.5) * sx - 0.5, (cy + 0.5) * sy - 0.5);
}

void EnergyParams::validate() const {
  if (!(mu1 < 0.0)) {
    throw ValidationError("mu1 must be negative");
  }
  if (!(mu2 > 0.0 && mu3 > 0.0 && mu4 > 0.0)) {
    throw ValidationError("mu2, mu3, mu4 must be positive");
  }
  if (!(sigmaB > 0.0 && sigmaD > 0.0)) {
    throw ValidationError("sigmaB and sigmaD must be positive");
  }
  if (N < 1) {
    throw ValidationError("N must be >= 1");
  }
  if (!(eta > 0.0 && gamma > 0.0)) {
    throw ValidationError("eta and gamma must be positive");
  }
  if (pyramidLevels < 1) {
    throw ValidationError("pyramidLevels must be >= 1");
  }
  if (!(pyramidScale > 0.0 && pyramidScale < 1.0)) {
    throw ValidationError("pyramidScale must be in (0,1)");
  }
  if (!(rotationBound > 0.0 && translationBound > 0.0)) {
    throw ValidationError("pose bounds must be positive");
  }
  if (lmMaxIterations < 1 || latentOuterIterations < 1 || cgMaxIterations < 1 ||
      alternationsPerLevel < 1 || multiStartCount < 1) {
    throw ValidationError("iteration counts must be >= 1");
  }
  if (!(cgTolerance > 0.0)) {
    throw ValidationError("cgTolerance must be positive");
  }
}

void validate_pair(const Image& image, const DepthMap& depth) {
  if (image.height() != depth.height() || image.width() != depth.width()) {
    throw DimensionMismatch("image and depth dimensions differ");
  }
  // The DepthMap constructor already rejects non-positive valid entries;
  // re-check here so an aliased/moved-from map cannot slip through.
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (depth.valid_at(y, x) && !(depth.at(y, x) > 0.0 && std::isfinite(depth.at(y, x)))) {
        throw NonPositiveDepth("valid depth entries must be finite and > 0");
      }
    }
  }
}

}  // namespace deblur
