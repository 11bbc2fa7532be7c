#pragma once

#include "depthdeblur/blur_operator.hpp"
#include "depthdeblur/core_types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace deblur {

struct LatentSolveReport {
  int outerIterations = 0;
  std::vector<int> innerIterations;  // CG iterations per outer step (all channels)
  std::vector<double> energyTrace;   // accepted objective after each outer step
  bool converged = false;
  std::string reason;
};

/// Image step with the pose fixed: alternates the dual ascent
/// q <- (q + gamma grad L) / max(1, |q + gamma grad L|) with a primal step
/// solving the quadratic subproblem
///   |A(L)-B|^2 + |grad A(L) - grad B|^2 + |L - (L^r - eta mu4 grad^T q)|^2 / (2 eta)
/// by conjugate gradients on the normal equations (matrix-free via
/// apply/apply_adjoint). The returned image is the best iterate by the
/// data + mu4 TV objective, clamped to [0,1] at output only; the energy trace
/// is non-increasing by construction. mu4 = 0 is accepted (pure least-squares
/// fixed point); everything else about `params` must be valid.
std::pair<Image, LatentSolveReport> solve_latent(const Image& B, const BlurOperator& op,
                                                 const Image& L0, const EnergyParams& params);

}  // namespace deblur
