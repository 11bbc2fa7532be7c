#include "depthdeblur/pipeline.hpp"

#include "depthdeblur/blur_operator.hpp"
#include "depthdeblur/energy.hpp"
#include "depthdeblur/geometry.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <future>
#include <limits>
#include <vector>

namespace deblur {

namespace {

std::vector<double> gaussian_kernel(double sigma) {
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
  return k;
}

std::vector<double> prefilter_plane(const double* in, int h, int w, double sigma) {
  std::vector<double> out(in, in + static_cast<std::size_t>(h) * w);
  if (sigma <= 0.0) {
    return out;
  }
  const std::vector<double> k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(out.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        acc += k[i + r] * out[static_cast<std::size_t>(y) * w + std::clamp(x + i, 0, w - 1)];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        acc += k[i + r] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

double bilinear_at(const std::vector<double>& p, int h, int w, double sx, double sy) {
  sx = std::clamp(sx, 0.0, w - 1.0);
  sy = std::clamp(sy, 0.0, h - 1.0);
  int x0 = std::min(static_cast<int>(sx), w - 2);
  int y0 = std::min(static_cast<int>(sy), h - 2);
  if (w == 1) x0 = 0;
  if (h == 1) y0 = 0;
  const double ax = sx - x0;
  const double ay = sy - y0;
  const std::size_t base = static_cast<std::size_t>(y0) * w + x0;
  const double top = (1.0 - ax) * p[base] + ax * p[base + 1];
  const double bot = (1.0 - ax) * p[base + w] + ax * p[base + w + 1];
  return (1.0 - ay) * top + ay * bot;
}

Image resize_image(const Image& src, int th, int tw, bool prefilter) {
  const int h = src.height();
  const int w = src.width();
  const double rx = static_cast<double>(tw) / w;
  const double ry = static_cast<double>(th) / h;
  // Anti-aliasing prefilter matched to the downscale factor.
  const double sx = prefilter && rx < 1.0 ? 0.5 * std::sqrt(1.0 / (rx * rx) - 1.0) : 0.0;
  const double sy = prefilter && ry < 1.0 ? 0.5 * std::sqrt(1.0 / (ry * ry) - 1.0) : 0.0;
  const double sigma = std::max(sx, sy);

  std::vector<double> out(static_cast<std::size_t>(th) * tw * src.channels());
  for (int c = 0; c < src.channels(); ++c) {
    const std::vector<double> plane = prefilter_plane(src.plane(c), h, w, sigma);
    for (int y = 0; y < th; ++y) {
      for (int x = 0; x < tw; ++x) {
        const double srcx = (x + 0.5) / rx - 0.5;
        const double srcy = (y + 0.5) / ry - 0.5;
        out[static_cast<std::size_t>(c) * th * tw + static_cast<std::size_t>(y) * tw + x] =
            bilinear_at(plane, h, w, srcx, srcy);
      }
    }
  }
  return Image::clamped(th, tw, src.channels(), std::move(out));
}

DepthMap resize_depth(const DepthMap& src, int th, int tw) {
  const int h = src.height();
  const int w = src.width();
  const double rx = static_cast<double>(tw) / w;
  const double ry = static_cast<double>(th) / h;
  const int radX = std::max(1, static_cast<int>(std::ceil(0.5 / rx)));
  const int radY = std::max(1, static_cast<int>(std::ceil(0.5 / ry)));

  std::vector<double> depth(static_cast<std::size_t>(th) * tw, 0.0);
  std::vector<std::uint8_t> valid(static_cast<std::size_t>(th) * tw, 0);
  std::vector<double> window;
  for (int y = 0; y < th; ++y) {
    for (int x = 0; x < tw; ++x) {
      const int cx = static_cast<int>(std::lround((x + 0.5) / rx - 0.5));
      const int cy = static_cast<int>(std::lround((y + 0.5) / ry - 0.5));
      window.clear();
      for (int dy = -radY; dy <= radY; ++dy) {
        for (int dx = -radX; dx <= radX; ++dx) {
          const int xx = std::clamp(cx + dx, 0, w - 1);
          const int yy = std::clamp(cy + dy, 0, h - 1);
          if (src.valid_at(yy, xx)) {
            window.push_back(src.at(yy, xx));
          }
        }
      }
      const std::size_t i = static_cast<std::size_t>(y) * tw + x;
      if (window.empty()) {
        continue;
      }
      // Median of the valid footprint keeps values metric and inside range.
      std::nth_element(window.begin(), window.begin() + window.size() / 2, window.end());
      depth[i] = window[window.size() / 2];
      valid[i] = 1;
    }
  }
  return DepthMap(th, tw, std::move(depth), std::move(valid));
}

double autocorr_width(const std::vector<double>& g, int h, int w, bool horizontal) {
  double mean = 0.0;
  for (double v : g) {
    mean += v;
  }
  mean /= static_cast<double>(g.size());
  double den = 0.0;
  for (double v : g) {
    den += (v - mean) * (v - mean);
  }
  if (den < 1e-12) {
    return 0.0;
  }
  const int maxLag = std::min(20, (horizontal ? w : h) / 3);
  double prev = 1.0;
  for (int d = 1; d <= maxLag; ++d) {
    double acc = 0.0;
    if (horizontal) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x + d < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          acc += (g[i] - mean) * (g[i + d] - mean);
        }
      }
    } else {
      for (int y = 0; y + d < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          acc += (g[i] - mean) * (g[i + static_cast<std::size_t>(d) * w] - mean);
        }
      }
    }
    const double rho = acc / den;
    if (rho < 0.5) {
      // Linear interpolation of the half-height crossing.
      const double t = (prev - 0.5) / std::max(prev - rho, 1e-12);
      return (d - 1) + t;
    }
    prev = rho;
  }
  return maxLag;
}

}  // namespace

int thread_count() {
  const char* env = std::getenv("DEPTHDEBLUR_THREADS");
  if (!env) {
    return 1;
  }
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

Pyramid build_pyramid(const Image& B, const DepthMap& D, const Intrinsics& K,
                      int levels, double scale) {
  validate_pair(B, D);
  if (levels < 1) {
    throw ValidationError("pyramid needs at least one level");
  }
  if (!(scale > 0.0 && scale < 1.0)) {
    throw ValidationError("pyramid scale must be in (0,1)");
  }
  if (B.height() < 16 || B.width() < 16) {
    throw ImageTooSmall("pyramid base level must be at least 16x16");
  }

  Pyramid pyr;
  pyr.scale = scale;
  pyr.levels.push_back({B, D, K});
  for (int l = 1; l < levels; ++l) {
    const PyramidLevel& prev = pyr.levels.back();
    const int th = static_cast<int>(std::floor(scale * prev.image.height()));
    const int tw = static_cast<int>(std::floor(scale * prev.image.width()));
    if (th < 16 || tw < 16) {
      break;  // truncate instead of producing degenerate levels
    }
    const double rx = static_cast<double>(tw) / prev.image.width();
    const double ry = static_cast<double>(th) / prev.image.height();
    PyramidLevel level;
    level.image = resize_image(prev.image, th, tw, true);
    level.depth = resize_depth(prev.depth, th, tw);
    level.intrinsics = prev.intrinsics.scaled(rx, ry);
    pyr.levels.push_back(std::move(level));
  }
  return pyr;
}

std::vector<Pose6> initialize_pose(const Image& B, const DepthMap& D, const Intrinsics& K,
                                   const EnergyParams& params) {
  validate_pair(B, D);
  const Image gray = B.to_gray();
  const int h = gray.height();
  const int w = gray.width();
  const std::size_t n = gray.pixels();

  std::vector<double> gx(n), gy(n), mag(n);
  forward_diff_plane(gray.plane(0), h, w, gx.data(), gy.data());
  for (std::size_t i = 0; i < n; ++i) {
    mag[i] = std::hypot(gx[i], gy[i]);
  }

  const double wx = autocorr_width(mag, h, w, true);
  const double wy = autocorr_width(mag, h, w, false);
  // A sharp image already has ~1 px of gradient correlation; only the excess
  // indicates blur. Cap the extent so every candidate keeps most of the image
  // inside the warp footprint (the pose solver rejects mask-starved poses).
  const double extent = std::min(2.0 * std::max(0.0, std::hypot(wx, wy) - 0.7),
                                 0.15 * std::min(h, w));

  double invZ = 0.0;
  std::size_t nz = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (D.valid_at(y, x)) {
        invZ += 1.0 / D.at(y, x);
        ++nz;
      }
    }
  }
  invZ = nz > 0 ? invZ / static_cast<double>(nz) : 1.0;

  std::vector<Pose6> candidates;
  candidates.reserve(params.multiStartCount);
  candidates.emplace_back();  // zero pose
  const int dirs = params.multiStartCount - 1;
  const double vmax = params.translationBound * (1.0 - 1e-9);
  for (int k = 0; k < dirs; ++k) {
    const double a = 2.0 * M_PI * k / std::max(dirs, 1);
    // Translation whose induced mean flow is extent * (cos a, sin a).
    double vx = -extent * std::cos(a) / (K.fx * invZ);
    double vy = -extent * std::sin(a) / (K.fy * invZ);
    vx = std::clamp(vx, -vmax, vmax);
    vy = std::clamp(vy, -vmax, vmax);
    candidates.emplace_back(Vec3::Zero(), Vec3(vx, vy, 0.0));
  }
  return candidates;
}

DeblurResult deblur(const Image& B, const DepthMap& D, const Intrinsics& K,
                    const EnergyParams& params) {
  params.validate();
  validate_pair(B, D);
  const auto t0 = std::chrono::steady_clock::now();

  const Pyramid pyr = build_pyramid(B, D, K, params.pyramidLevels, params.pyramidScale);
  const int nLevels = static_cast<int>(pyr.levels.size());

  DeblurResult result;
  Image L = pyr.levels[nLevels - 1].image;  // coarsest blurry image as init
  Pose6 p;

  for (int li = nLevels - 1; li >= 0; --li) {
    const PyramidLevel& lv = pyr.levels[li];
    if (li != nLevels - 1) {
      L = resize_image(L, lv.image.height(), lv.image.width(), false);
    }
    LevelReport rep;
    rep.level = li;
    rep.width = lv.image.width();
    rep.height = lv.image.height();

    const Image Bg = lv.image.to_gray();

    if (li == nLevels - 1) {
      // Multi-start pose search replaces an external blind-kernel prior.
      const std::vector<Pose6> candidates = initialize_pose(lv.image, lv.depth,
                                                            lv.intrinsics, params);
      const Image Lg = L.to_gray();
      auto solveCandidate = [&](const Pose6& c) {
        return solve_pose(Lg, Bg, lv.depth, lv.intrinsics, c, params);
      };
      std::vector<std::pair<Pose6, PoseSolveReport>> attempts(candidates.size());
      const int workers = std::min<int>(thread_count(), static_cast<int>(candidates.size()));
      if (workers > 1) {
        std::vector<std::future<std::pair<Pose6, PoseSolveReport>>> futs;
        futs.reserve(candidates.size());
        for (const Pose6& c : candidates) {
          futs.push_back(std::async(std::launch::async, solveCandidate, c));
        }
        for (std::size_t i = 0; i < futs.size(); ++i) {
          attempts[i] = futs[i].get();
        }
      } else {
        for (std::size_t i = 0; i < candidates.size(); ++i) {
          attempts[i] = solveCandidate(candidates[i]);
        }
      }
      double bestEnergy = std::numeric_limits<double>::infinity();
      std::size_t bestIdx = 0;
      for (std::size_t i = 0; i < attempts.size(); ++i) {
        const double e = attempts[i].second.energyTrace.back();
        if (e < bestEnergy) {
          bestEnergy = e;
          bestIdx = i;
        }
      }
      p = attempts[bestIdx].first;
      rep.poseReports.push_back(attempts[bestIdx].second);
    }

    double levelEnergy = total_energy(L, lv.image, p, lv.depth, lv.intrinsics, params);
    rep.energyTrace.push_back(levelEnergy);

    for (int alt = 0; alt < params.alternationsPerLevel; ++alt) {
      auto [pNew, poseRep] = solve_pose(L.to_gray(), Bg, lv.depth, lv.intrinsics, p, params);
      // The pose step minimizes the grayscale objective; on color inputs guard
      // against a (rare) increase of the full-color energy.
      const double ePose = total_energy(L, lv.image, pNew, lv.depth, lv.intrinsics, params);
      if (ePose <= levelEnergy) {
        p = pNew;
        levelEnergy = ePose;
      }
      rep.poseReports.push_back(std::move(poseRep));
      rep.energyTrace.push_back(levelEnergy);

      const BlurOperator op = BlurOperator::build(p, lv.depth, lv.intrinsics, params.N);
      auto [LNew, latentRep] = solve_latent(lv.image, op, L, params);
      if (!latentRep.converged) {
        result.converged = false;
      }
      L = std::move(LNew);
      levelEnergy = total_energy(L, lv.image, p, lv.depth, lv.intrinsics, params);
      rep.latentReports.push_back(std::move(latentRep));
      rep.energyTrace.push_back(levelEnergy);
    }
    result.levels.push_back(std::move(rep));
  }

  // The exposure samples span +-p/2 symmetrically, so the sign of p is
  // unobservable from the blur; report the canonical orientation.
  p = canonical_orientation(p);

  result.latent = L;
  result.pose = p;
  result.flow = induced_flow(p, D, K);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::vector<Image> render_sequence(const DeblurResult& result, const DepthMap& D,
                                   const Intrinsics& K, int frames) {
  if (frames < 2) {
    throw ValidationError("render_sequence needs at least 2 frames");
  }
  std::vector<Image> out;
  out.reserve(frames);
  for (int i = 0; i < frames; ++i) {
    const double t = -1.0 + 2.0 * i / (frames - 1);
    out.push_back(warp(pose_at_time(result.pose, t), D, result.latent, K).image);
  }
  return out;
}

}  // namespace deblur
