#pragma once

#include "depthdeblur/core_types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace deblur {

struct PoseSolveReport {
  Pose6 initial;
  Pose6 final_pose;
  int iterations = 0;               // accepted LM steps
  std::vector<double> energyTrace;  // objective at p0 and after each accepted step
  bool converged = false;
  std::string reason;
};

/// Camera-motion step: minimizes the data term plus mu1 |p|^2 + S(p) over the
/// 6-vector p with L fixed, via Levenberg-Marquardt with a central-difference
/// Jacobian. The concave mu1 |p|^2 term enters the model and gain ratio
/// directly (it cannot be a squared residual). Steps leaving the feasible box
/// (|theta_i| <= rotationBound, |theta| <= 0.5, |v_i| <= translationBound)
/// are rejected and the damping increased. Accepted steps strictly decrease
/// the objective.
std::pair<Pose6, PoseSolveReport> solve_pose(const Image& L, const Image& B,
                                             const DepthMap& D, const Intrinsics& K,
                                             const Pose6& p0, const EnergyParams& params);

/// The pose-step objective (total energy minus the pose-independent TV term).
double pose_objective(const Image& L, const Image& B, const DepthMap& D,
                      const Intrinsics& K, const Pose6& p, const EnergyParams& params);

/// Gradient of the pose objective derived from the solver's finite-difference
/// Jacobian: 2 (J^T r + mu1 p).
Vec6 pose_objective_gradient(const Image& L, const Image& B, const DepthMap& D,
                             const Intrinsics& K, const Pose6& p, const EnergyParams& params);

}  // namespace deblur
