#pragma once

#include "depthdeblur/core_types.hpp"

namespace deblur {

/// First-order rotation matrix I + [theta]x (not orthonormalized).
/// Rejects |theta| > 0.5 rad where the approximation breaks down.
Mat3 small_rotation(const Vec3& theta);

/// Camera pose at normalized exposure time t in [-1, 1]: (t/2) * p, so the
/// trajectory endpoints are +-p/2 around the mid-exposure reference frame.
Pose6 pose_at_time(const Pose6& p, double t);

/// The exposure trajectory spans +-p/2 symmetrically, so p and -p produce the
/// same blur and the sign is unobservable. This picks the representative with
/// a non-negative component sum; sampling and estimation both report it.
Pose6 canonical_orientation(const Pose6& p);

/// Maps pixel (x, y) with depth z through X' = R * backproject(x, y, z) + t
/// and reprojects. Returns false when the transformed point has non-positive
/// depth. Near-integer results are snapped to the pixel grid so that the
/// identity transform maps every pixel to itself exactly.
bool project_pixel(const Mat3& R, const Vec3& t, const Intrinsics& K,
                   double x, double y, double z, double& sx, double& sy);

/// In-bounds bilinear footprint for a source position. ax/ay are the
/// fractional offsets from (x0, y0); false when the position leaves
/// [0, W-1] x [0, H-1].
struct BilinearTap {
  int x0 = -1;
  int y0 = -1;
  double ax = 0.0;
  double ay = 0.0;
};
bool bilinear_tap(double sx, double sy, int width, int height, BilinearTap& tap);

struct WarpResult {
  Image image;
  std::vector<std::uint8_t> valid;  // depth valid and sample footprint in bounds
};

/// Backward warp realizing the view at camera pose p: each output pixel is
/// back-projected with the latent depth, moved by (R(theta), v) into the
/// latent frame, and bilinearly sampled from `image`. Linear in the image
/// for fixed (p, depth, K).
WarpResult warp(const Pose6& p, const DepthMap& depth, const Image& image, const Intrinsics& K);

/// Sampling offsets used by `warp` (target pixel -> source displacement).
FlowField backward_flow(const Pose6& p, const DepthMap& depth, const Intrinsics& K);

/// Optical flow induced by camera motion p: apparent displacement of the
/// latent-frame scene points when projected into the moved camera. For a
/// constant-depth scene under pure x-translation this is (-fx*vx/Z, 0).
FlowField induced_flow(const Pose6& p, const DepthMap& depth, const Intrinsics& K);

}  // namespace deblur
