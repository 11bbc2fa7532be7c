#pragma once

#include "depthdeblur/core_types.hpp"

#include <cstdint>

namespace deblur {

/// A synthesized benchmark instance: blurry = mean of 2N+1 warps of `clean`
/// along `truePose`, plus seeded Gaussian noise, clamped to [0,1].
struct SynthInstance {
  Image clean;
  DepthMap depth;
  Intrinsics intrinsics;
  Pose6 truePose;
  Image blurry;
  FlowField trueFlow;
  std::vector<std::uint8_t> validMask;  // pixels valid in every exposure sample
  std::uint64_t seed = 0;
  double noiseSigma = 0.0;
};

/// Draws rotation components from N(0, sigma_a^2) and translations from
/// N(0, sigma_t^2), resampling until the pose lies inside the small-motion
/// feasible box (|theta_i| <= 0.3, |theta| <= 0.5, |v_i| <= 10 sigma_t).
/// Deterministic for a fixed seed.
Pose6 sample_motion(double sigma_a, double sigma_t, std::uint64_t seed);

SynthInstance synthesize(const Image& clean, const DepthMap& depth, const Intrinsics& K,
                         const Pose6& p, int N, double noiseSigma, std::uint64_t seed);

struct ProceduralScene {
  Image image;
  DepthMap depth;
  Intrinsics intrinsics;
};

/// Bundled test scene: checkerboards at two scales, a smooth gradient and
/// random Gaussian blobs over a slanted-plane depth around 2 m. smooth_sigma
/// optionally prefilters the texture (useful where band-limited content is
/// wanted).
ProceduralScene procedural_scene(int height, int width, std::uint64_t seed,
                                 int channels = 1, double smooth_sigma = 0.0);

/// procedural_scene + sample_motion + synthesize with seeds derived from one
/// instance seed.
SynthInstance make_procedural_instance(int height, int width, std::uint64_t seed,
                                       double sigma_a, double sigma_t, int N,
                                       double noiseSigma, int channels = 1);

}  // namespace deblur
