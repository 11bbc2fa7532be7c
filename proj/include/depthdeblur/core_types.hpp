#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace deblur {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Error taxonomy. The CLI maps these onto exit codes (see tools/main.cpp).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionMismatch : Error {
  using Error::Error;
};
struct NonPositiveDepth : Error {
  using Error::Error;
};
struct AngleTooLarge : Error {
  using Error::Error;
};
struct ImageTooSmall : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct MissingInput : Error {
  using Error::Error;
};
struct SolverFailure : Error {
  using Error::Error;
};

// Beyond this rotation magnitude the first-order rotation model is invalid and
// every geometry operation rejects the pose.
inline constexpr double kMaxRotationNorm = 0.5;

/// Intensity image with values in [0, 1], planar storage (channel-major,
/// row-major inside a plane). Channels are 1 (gray) or 3 (RGB). Immutable
/// after construction; the validating constructor rejects out-of-range or
/// non-finite data, `clamped` is the documented clamping entry point for I/O
/// and solver outputs.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels);  // zero-filled
  Image(int height, int width, int channels, std::vector<double> data);
  static Image clamped(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  double at(int y, int x, int c = 0) const {
    return data_[plane_offset(c) + static_cast<std::size_t>(y) * width_ + x];
  }
  const double* plane(int c) const { return data_.data() + plane_offset(c); }
  const std::vector<double>& data() const { return data_; }

  /// Rec.601 luma for 3-channel images; identity for single-channel.
  Image to_gray() const;

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

 private:
  std::size_t plane_offset(int c) const { return static_cast<std::size_t>(c) * pixels(); }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Unvalidated image-shaped buffer for intermediate solver quantities
/// (residuals, adjoint outputs) that are not constrained to [0, 1].
struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  RawImage() = default;
  RawImage(int h, int w, int c)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, 0.0) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  double* plane(int c) { return data.data() + static_cast<std::size_t>(c) * pixels(); }
  const double* plane(int c) const { return data.data() + static_cast<std::size_t>(c) * pixels(); }
};

/// Metric depth map (meters) aligned with an Image; per-pixel validity mask.
/// Valid entries are strictly positive and finite.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int height, int width, std::vector<double> depth, std::vector<std::uint8_t> valid);
  DepthMap(int height, int width, std::vector<double> depth);  // all pixels valid
  static DepthMap constant(int height, int width, double z);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }

  double at(int y, int x) const { return depth_[static_cast<std::size_t>(y) * width_ + x]; }
  bool valid_at(int y, int x) const { return valid_[static_cast<std::size_t>(y) * width_ + x] != 0; }

  const std::vector<double>& values() const { return depth_; }
  const std::vector<std::uint8_t>& validity() const { return valid_; }

  std::size_t valid_count() const;
  double mean_valid() const;  // throws ValidationError if no valid pixel
  std::pair<double, double> valid_range() const;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> depth_;
  std::vector<std::uint8_t> valid_;
};

/// 6-DoF exposure motion: rotation (radians) and translation (meters).
/// Components must be finite; the small-rotation guard is enforced by the
/// geometry operations, not the constructor.
struct Pose6 {
  Vec3 theta = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  Pose6() = default;
  Pose6(const Vec3& theta_in, const Vec3& v_in);

  static Pose6 from_vector(const Vec6& p);
  Vec6 to_vector() const;

  double squared_norm() const { return theta.squaredNorm() + v.squaredNorm(); }
  double norm() const;
  bool is_zero() const { return theta.isZero(0.0) && v.isZero(0.0); }
};

Pose6 operator*(double s, const Pose6& p);
Pose6 operator-(const Pose6& p);
Pose6 operator+(const Pose6& a, const Pose6& b);

/// Pinhole intrinsics in pixels. The principal-point bounds against a
/// concrete image size are checked by the operations that see both.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  Intrinsics() = default;
  Intrinsics(double fx_in, double fy_in, double cx_in, double cy_in);

  /// Similarity-scaled intrinsics for a resampled image (pixel-center convention).
  Intrinsics scaled(double sx, double sy) const;
};

/// Per-pixel displacement field (du, dv) in pixels with a validity mask.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<double> du;
  std::vector<double> dv;
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(int h, int w)
      : height(h), width(w),
        du(static_cast<std::size_t>(h) * w, 0.0),
        dv(static_cast<std::size_t>(h) * w, 0.0),
        valid(static_cast<std::size_t>(h) * w, 1) {}

  std::size_t idx(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
};

/// Energy weights and solver configuration. Defaults follow the reference
/// settings: mu1 = -20 (negative by construction: rewards nonzero motion),
/// mu2 = mu3 = 0.2, mu4 = 0.05, sigmaB = 0.01, sigmaD = 0.02, 2N+1 = 21
/// exposure samples, eta = 10, gamma = 0.005, 11 pyramid levels at scale 0.9.
struct EnergyParams {
  double mu1 = -20.0;
  double mu2 = 0.2;
  double mu3 = 0.2;
  double mu4 = 0.05;
  double sigmaB = 0.01;
  double sigmaD = 0.02;
  int N = 10;  // half sample count; the operator averages 2N+1 warps
  double eta = 10.0;
  double gamma = 0.005;
  int pyramidLevels = 11;
  double pyramidScale = 0.9;

  // Solver configuration (artifact-level knobs, not model weights).
  double rotationBound = 0.3;     // |theta_i| box for the pose solver
  double translationBound = 0.5;  // |v_i| box, default 10 * sigma_t at desk scale
  int lmMaxIterations = 50;
  int latentOuterIterations = 50;
  int cgMaxIterations = 200;
  double cgTolerance = 1e-6;
  int alternationsPerLevel = 3;
  int multiStartCount = 9;

  void validate() const;  // throws ValidationError
};

/// Checks that an image/depth pair is usable together.
void validate_pair(const Image& image, const DepthMap& depth);

}  // namespace deblur
