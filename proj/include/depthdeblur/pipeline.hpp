#pragma once

#include "depthdeblur/core_types.hpp"
#include "depthdeblur/solver_latent.hpp"
#include "depthdeblur/solver_pose.hpp"

#include <vector>

namespace deblur {

struct PyramidLevel {
  Image image;
  DepthMap depth;
  Intrinsics intrinsics;
};

/// levels[0] is the finest (original); each coarser level has floor(scale *
/// previous) pixels per axis, intrinsics scaled with the actual resize ratio
/// and metric depth values unchanged. Construction stops early when the next
/// level would drop below 16x16.
struct Pyramid {
  std::vector<PyramidLevel> levels;
  double scale = 0.9;
};

Pyramid build_pyramid(const Image& B, const DepthMap& D, const Intrinsics& K,
                      int levels, double scale);

/// Multi-start pose candidates: the zero pose plus M-1 pure translations whose
/// induced mean flow spans evenly spaced directions with magnitude set by a
/// blur-extent estimate (autocorrelation width of the gradient magnitude).
std::vector<Pose6> initialize_pose(const Image& B, const DepthMap& D, const Intrinsics& K,
                                   const EnergyParams& params);

struct LevelReport {
  int level = 0;
  int width = 0;
  int height = 0;
  std::vector<double> energyTrace;  // total energy at level start and after each stage
  std::vector<PoseSolveReport> poseReports;
  std::vector<LatentSolveReport> latentReports;
};

struct DeblurResult {
  Image latent;
  Pose6 pose;
  std::vector<LevelReport> levels;  // ordered coarse to fine
  FlowField flow;                   // induced flow at full resolution
  double seconds = 0.0;
  bool converged = true;
};

/// Full coarse-to-fine alternation: multi-start pose search at the coarsest
/// level, then per level alternate solve_pose (on grayscale) and solve_latent
/// (full color), upscaling the latent estimate between levels. The pose is
/// resolution independent; only the intrinsics change across levels.
DeblurResult deblur(const Image& B, const DepthMap& D, const Intrinsics& K,
                    const EnergyParams& params);

/// Sharp sequence over the exposure: frames warped by pose_at_time(p, t) for
/// t uniform in [-1, 1]. With frames = 2N+1 the frame average reproduces the
/// blur operator output on its valid mask.
std::vector<Image> render_sequence(const DeblurResult& result, const DepthMap& D,
                                   const Intrinsics& K, int frames);

/// Worker count taken from DEPTHDEBLUR_THREADS (default 1).
int thread_count();

}  // namespace deblur
