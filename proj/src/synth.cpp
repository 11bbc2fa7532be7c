#include "depthdeblur/synth.hpp"

#include "depthdeblur/blur_operator.hpp"
#include "depthdeblur/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace deblur {

namespace {

constexpr double kRotationBox = 0.3;
constexpr double kTranslationBoxFactor = 10.0;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 step; keeps the scene/pose/noise streams independent.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void separable_gaussian(std::vector<double>& img, int h, int w, double sigma) {
  if (sigma <= 0.0) {
    return;
  }
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + r];
  }
  for (double& v : k) {
    v /= sum;
  }
  std::vector<double> tmp(img.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int xx = std::clamp(x + i, 0, w - 1);
        acc += k[i + r] * img[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int yy = std::clamp(y + i, 0, h - 1);
        acc += k[i + r] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      img[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
}

}  // namespace

Pose6 sample_motion(double sigma_a, double sigma_t, std::uint64_t seed) {
  if (!(sigma_a > 0.0 && sigma_t > 0.0)) {
    throw ValidationError("motion sigmas must be positive");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> rot(0.0, sigma_a);
  std::normal_distribution<double> trans(0.0, sigma_t);
  const double vBox = kTranslationBoxFactor * sigma_t;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Vec3 theta(rot(rng), rot(rng), rot(rng));
    Vec3 v(trans(rng), trans(rng), trans(rng));
    const bool ok = theta.cwiseAbs().maxCoeff() <= kRotationBox &&
                    theta.norm() <= kMaxRotationNorm &&
                    v.cwiseAbs().maxCoeff() <= vBox;
    if (ok) {
      // The blur model cannot observe the trajectory sign; report the
      // canonical representative (a symmetric reflection, so the component
      // distributions are unchanged).
      return canonical_orientation(Pose6(theta, v));
    }
  }
  throw ValidationError("motion sampling failed to land in the feasible box");
}

SynthInstance synthesize(const Image& clean, const DepthMap& depth, const Intrinsics& K,
                         const Pose6& p, int N, double noiseSigma, std::uint64_t seed) {
  validate_pair(clean, depth);
  if (noiseSigma < 0.0) {
    throw ValidationError("noiseSigma must be non-negative");
  }

  const BlurOperator op = BlurOperator::build(p, depth, K, N);
  auto [blurred, mask] = op.apply(clean);

  std::vector<double> noisy(blurred.data());
  if (noiseSigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noiseSigma);
    for (double& v : noisy) {
      v += noise(rng);
    }
  }

  SynthInstance inst;
  inst.clean = clean;
  inst.depth = depth;
  inst.intrinsics = K;
  inst.truePose = p;
  inst.blurry = Image::clamped(clean.height(), clean.width(), clean.channels(), std::move(noisy));
  inst.trueFlow = induced_flow(p, depth, K);
  inst.validMask = std::move(mask);
  inst.seed = seed;
  inst.noiseSigma = noiseSigma;
  return inst;
}

ProceduralScene procedural_scene(int height, int width, std::uint64_t seed,
                                 int channels, double smooth_sigma) {
  if (height < 4 || width < 4) {
    throw ImageTooSmall("procedural scene needs at least 4x4");
  }
  if (channels != 1 && channels != 3) {
    throw ValidationError("procedural scene supports 1 or 3 channels");
  }
  std::mt19937_64 rng(mix_seed(seed, 0));
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  struct Blob {
    double x, y, sigma, amp, tint;
  };
  std::vector<Blob> blobs(12);
  for (Blob& b : blobs) {
    b.x = uni(rng) * (width - 1);
    b.y = uni(rng) * (height - 1);
    b.sigma = 2.0 + 8.0 * uni(rng);
    b.amp = -0.25 + 0.5 * uni(rng);
    b.tint = uni(rng);
  }
  const double phase = uni(rng) * 8.0;

  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<double> base(n);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int cx = static_cast<int>((x + phase) / 8.0) + static_cast<int>((y + phase) / 8.0);
      const int cf = static_cast<int>((x + phase) / 3.0) + static_cast<int>((y + phase) / 3.0);
      double v = 0.45;
      v += (cx % 2 == 0) ? 0.18 : -0.18;
      v += (cf % 2 == 0) ? 0.08 : -0.08;
      v += 0.15 * (static_cast<double>(x + y) / (width + height));
      for (const Blob& b : blobs) {
        const double dx = x - b.x;
        const double dy = y - b.y;
        v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      }
      base[static_cast<std::size_t>(y) * width + x] = v;
    }
  }
  separable_gaussian(base, height, width, smooth_sigma);

  std::vector<double> data(n * channels);
  if (channels == 1) {
    data = base;
  } else {
    for (int c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        data[c * n + i] = base[i];
      }
    }
    // Tint the blobs so the channels are correlated but not identical.
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        for (const Blob& b : blobs) {
          const double dx = x - b.x;
          const double dy = y - b.y;
          const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
          data[0 * n + i] += 0.10 * (b.tint - 0.5) * g;
          data[2 * n + i] -= 0.10 * (b.tint - 0.5) * g;
        }
      }
    }
  }
  for (double& v : data) {
    v = std::clamp(v, 0.02, 0.98);
  }

  // Slanted plane around 2 m; every pixel valid.
  std::vector<double> depth(n);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / (width - 1) - 0.5;
      const double w2 = static_cast<double>(y) / (height - 1) - 0.5;
      depth[static_cast<std::size_t>(y) * width + x] = 2.0 + 0.8 * u + 0.5 * w2;
    }
  }

  ProceduralScene scene;
  scene.image = Image::clamped(height, width, channels, std::move(data));
  scene.depth = DepthMap(height, width, std::move(depth));
  scene.intrinsics = Intrinsics(100.0, 100.0, (width - 1) / 2.0, (height - 1) / 2.0);
  return scene;
}

SynthInstance make_procedural_instance(int height, int width, std::uint64_t seed,
                                       double sigma_a, double sigma_t, int N,
                                       double noiseSigma, int channels) {
  ProceduralScene scene = procedural_scene(height, width, seed, channels);
  const Pose6 p = sample_motion(sigma_a, sigma_t, mix_seed(seed, 1));
  SynthInstance inst = synthesize(scene.image, scene.depth, scene.intrinsics, p, N,
                                  noiseSigma, mix_seed(seed, 2));
  inst.seed = seed;
  return inst;
}

}  // namespace deblur
