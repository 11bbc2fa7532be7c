#include "depthdeblur/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace deblur {

namespace {

constexpr double kMinViewDepth = 1e-9;
constexpr double kGridSnap = 1e-9;  // absorbs projection round-off near grid nodes

void check_rotation_norm(const Vec3& theta) {
  if (theta.norm() > kMaxRotationNorm) {
    throw AngleTooLarge("rotation magnitude exceeds the small-motion bound of 0.5 rad");
  }
}

double snap(double s) {
  const double r = std::round(s);
  return std::abs(s - r) <= kGridSnap ? r : s;
}

// Transform pair realizing the backward-warp sampling map of pose p:
// target pixels are moved into the latent frame by X -> R(theta) X + v.
struct ViewTransform {
  Mat3 R;
  Vec3 t;
};

ViewTransform sampling_transform(const Pose6& p) {
  return {small_rotation(p.theta), p.v};
}

// Inverse view used for the induced (forward) flow: latent points expressed
// in the moved camera, X -> R(-theta) (X - v), kept inside the first-order
// rotation family since (I + [theta]x)^T == I + [-theta]x.
ViewTransform forward_transform(const Pose6& p) {
  const Mat3 R = small_rotation(-p.theta);
  return {R, -(R * p.v)};
}

FlowField flow_from_transform(const ViewTransform& T, const DepthMap& depth,
                              const Intrinsics& K) {
  FlowField flow(depth.height(), depth.width());
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const std::size_t i = flow.idx(y, x);
      if (!depth.valid_at(y, x)) {
        flow.valid[i] = 0;
        continue;
      }
      double sx, sy;
      if (!project_pixel(T.R, T.t, K, x, y, depth.at(y, x), sx, sy)) {
        flow.valid[i] = 0;
        continue;
      }
      flow.du[i] = sx - x;
      flow.dv[i] = sy - y;
    }
  }
  return flow;
}

}  // namespace

Mat3 small_rotation(const Vec3& theta) {
  check_rotation_norm(theta);
  Mat3 R;
  R << 1.0, -theta.z(), theta.y(),
       theta.z(), 1.0, -theta.x(),
       -theta.y(), theta.x(), 1.0;
  return R;
}

Pose6 pose_at_time(const Pose6& p, double t) {
  if (!(t >= -1.0 - 1e-12 && t <= 1.0 + 1e-12)) {
    throw ValidationError("normalized exposure time must lie in [-1, 1]");
  }
  return (0.5 * t) * p;
}

Pose6 canonical_orientation(const Pose6& p) {
  const double s = p.theta.sum() + p.v.sum();
  return s < 0.0 ? -p : p;
}

bool project_pixel(const Mat3& R, const Vec3& t, const Intrinsics& K,
                   double x, double y, double z, double& sx, double& sy) {
  const double X = (x - K.cx) * z / K.fx;
  const double Y = (y - K.cy) * z / K.fy;
  const double xp = R(0, 0) * X + R(0, 1) * Y + R(0, 2) * z + t.x();
  const double yp = R(1, 0) * X + R(1, 1) * Y + R(1, 2) * z + t.y();
  const double zp = R(2, 0) * X + R(2, 1) * Y + R(2, 2) * z + t.z();
  if (!(zp > kMinViewDepth)) {
    return false;
  }
  sx = snap(K.fx * xp / zp + K.cx);
  sy = snap(K.fy * yp / zp + K.cy);
  return true;
}

bool bilinear_tap(double sx, double sy, int width, int height, BilinearTap& tap) {
  if (!(sx >= 0.0 && sx <= width - 1.0 && sy >= 0.0 && sy <= height - 1.0)) {
    return false;
  }
  int x0 = static_cast<int>(sx);
  int y0 = static_cast<int>(sy);
  // Keep the 2x2 footprint inside the image when sampling exactly on the
  // far edge; the fractional weight becomes 1 there.
  x0 = std::min(x0, width - 2);
  y0 = std::min(y0, height - 2);
  if (width == 1) x0 = 0;
  if (height == 1) y0 = 0;
  tap.x0 = x0;
  tap.y0 = y0;
  tap.ax = sx - x0;
  tap.ay = sy - y0;
  return true;
}

WarpResult warp(const Pose6& p, const DepthMap& depth, const Image& image,
                const Intrinsics& K) {
  validate_pair(image, depth);
  check_rotation_norm(p.theta);

  const int h = image.height();
  const int w = image.width();
  const int c = image.channels();
  const bool identity = p.is_zero();
  const ViewTransform T = sampling_transform(p);

  std::vector<double> out(static_cast<std::size_t>(h) * w * c, 0.0);
  std::vector<std::uint8_t> valid(static_cast<std::size_t>(h) * w, 0);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!depth.valid_at(y, x)) {
        continue;
      }
      double sx = x, sy = y;
      if (!identity && !project_pixel(T.R, T.t, K, x, y, depth.at(y, x), sx, sy)) {
        continue;
      }
      BilinearTap tap;
      if (!bilinear_tap(sx, sy, w, h, tap)) {
        continue;
      }
      valid[i] = 1;
      const double w00 = (1.0 - tap.ax) * (1.0 - tap.ay);
      const double w01 = tap.ax * (1.0 - tap.ay);
      const double w10 = (1.0 - tap.ax) * tap.ay;
      const double w11 = tap.ax * tap.ay;
      const std::size_t base = static_cast<std::size_t>(tap.y0) * w + tap.x0;
      for (int ch = 0; ch < c; ++ch) {
        const double* src = image.plane(ch);
        out[static_cast<std::size_t>(ch) * h * w + i] =
            w00 * src[base] + w01 * src[base + 1] +
            w10 * src[base + w] + w11 * src[base + w + 1];
      }
    }
  }
  return {Image::clamped(h, w, c, std::move(out)), std::move(valid)};
}

FlowField backward_flow(const Pose6& p, const DepthMap& depth, const Intrinsics& K) {
  check_rotation_norm(p.theta);
  return flow_from_transform(sampling_transform(p), depth, K);
}

FlowField induced_flow(const Pose6& p, const DepthMap& depth, const Intrinsics& K) {
  check_rotation_norm(p.theta);
  return flow_from_transform(forward_transform(p), depth, K);
}

}  // namespace deblur
