#include "depthdeblur/solver_pose.hpp"

#include "depthdeblur/blur_operator.hpp"
#include "depthdeblur/energy.hpp"
#include "depthdeblur/geometry.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace deblur {

namespace {

constexpr double kRotationStep = 1e-6;
constexpr double kTranslationStepScale = 1e-5;  // times the mean scene depth
constexpr double kDampingCeiling = 1e8;
constexpr double kObjectiveTol = 1e-6;
constexpr double kStepTol = 1e-8;

// The data term sums over pixels valid in every exposure sample, so a pose
// large enough to sweep most pixels out of frame zeroes the data term while
// keeping the mu1 < 0 reward: the energy would be minimized by evacuating the
// image. Poses whose strict mask drops below this fraction of the depth-valid
// pixels are treated as infeasible, like box violations.
constexpr double kMinValidFraction = 0.6;

bool pose_feasible(const Pose6& p, const EnergyParams& params) {
  return p.theta.cwiseAbs().maxCoeff() <= params.rotationBound &&
         p.theta.norm() <= kMaxRotationNorm - 1e-9 &&
         p.v.cwiseAbs().maxCoeff() <= params.translationBound;
}

// Residual assembly for the Eq.-7-style objective. The stacked vector holds,
// per channel, the per-pixel intensity residuals and the two forward-difference
// gradient residuals, followed by the four sqrt(E)-weighted flow-gradient
// components. Entries outside the footprint stay zero so the layout is fixed
// across pose perturbations.
struct PoseProblem {
  const Image& L;
  const Image& B;
  const DepthMap& D;
  const Intrinsics& K;
  const EnergyParams& params;
  int h, w, channels;
  std::size_t n;
  std::vector<double> sqrtE;
  double translationStep;

  PoseProblem(const Image& L_in, const Image& B_in, const DepthMap& D_in,
              const Intrinsics& K_in, const EnergyParams& params_in)
      : L(L_in), B(B_in), D(D_in), K(K_in), params(params_in),
        h(B_in.height()), w(B_in.width()), channels(B_in.channels()),
        n(B_in.pixels()) {
    validate_pair(B, D);
    if (!L.same_shape(B)) {
      throw DimensionMismatch("latent and blurry images differ in shape");
    }
    const EdgeWeightField E = edge_weights(B, D, params);
    sqrtE.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      sqrtE[i] = std::sqrt(E.w[i]);
    }
    translationStep = kTranslationStepScale * D.mean_valid();
  }

  std::size_t residual_size() const { return n * (3 * channels + 4); }

  // Residuals at pose p restricted to the given strict mask (frozen while
  // differencing, fresh when scoring a trial step).
  void residuals(const Pose6& p, const std::vector<std::uint8_t>& strict,
                 std::vector<double>& r) const {
    r.assign(residual_size(), 0.0);
    const BlurOperator op = BlurOperator::build(p, D, K, params.N);
    std::vector<double> bhat(n);
    std::size_t ofs = 0;
    for (int c = 0; c < channels; ++c) {
      op.apply_plane(L.plane(c), bhat.data());
      const double* b = B.plane(c);
      double* rd = r.data() + ofs;
      double* rgx = r.data() + ofs + n;
      double* rgy = r.data() + ofs + 2 * n;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          if (!strict[i]) {
            continue;
          }
          rd[i] = bhat[i] - b[i];
          if (x + 1 < w && strict[i + 1]) {
            rgx[i] = (bhat[i + 1] - bhat[i]) - (b[i + 1] - b[i]);
          }
          if (y + 1 < h && strict[i + w]) {
            rgy[i] = (bhat[i + w] - bhat[i]) - (b[i + w] - b[i]);
          }
        }
      }
      ofs += 3 * n;
    }

    const FlowField flow = induced_flow(p, D, K);
    double* fxu = r.data() + ofs;
    double* fyu = r.data() + ofs + n;
    double* fxv = r.data() + ofs + 2 * n;
    double* fyv = r.data() + ofs + 3 * n;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!flow.valid[i]) {
          continue;
        }
        const double s = sqrtE[i];
        if (x + 1 < w && flow.valid[i + 1]) {
          fxu[i] = s * (flow.du[i + 1] - flow.du[i]);
          fxv[i] = s * (flow.dv[i + 1] - flow.dv[i]);
        }
        if (y + 1 < h && flow.valid[i + w]) {
          fyu[i] = s * (flow.du[i + w] - flow.du[i]);
          fyv[i] = s * (flow.dv[i + w] - flow.dv[i]);
        }
      }
    }
  }

  double objective_from(const std::vector<double>& r, const Pose6& p) const {
    double sum = 0.0;
    for (double v : r) {
      sum += v * v;
    }
    return sum + params.mu1 * p.squared_norm();
  }

  struct Evaluation {
    double phi = 0.0;
    std::size_t strictCount = 0;
  };

  // Fresh-footprint objective.
  Evaluation objective(const Pose6& p, std::vector<double>& scratch) const {
    const BlurOperator op = BlurOperator::build(p, D, K, params.N);
    residuals(p, op.valid_mask(), scratch);
    std::size_t count = 0;
    for (std::uint8_t v : op.valid_mask()) {
      count += v ? 1 : 0;
    }
    return {objective_from(scratch, p), count};
  }

  double step_size(int j) const { return j < 3 ? kRotationStep : translationStep; }

  // Central-difference Jacobian on the frozen footprint.
  void jacobian(const Pose6& p, const std::vector<std::uint8_t>& strict,
                std::vector<std::vector<double>>& J) const {
    J.resize(6);
    std::vector<double> rp, rm;
    const Vec6 base = p.to_vector();
    for (int j = 0; j < 6; ++j) {
      const double hstep = step_size(j);
      Vec6 vp = base, vm = base;
      vp[j] += hstep;
      vm[j] -= hstep;
      residuals(Pose6::from_vector(vp), strict, rp);
      residuals(Pose6::from_vector(vm), strict, rm);
      J[j].resize(rp.size());
      const double inv = 1.0 / (2.0 * hstep);
      for (std::size_t i = 0; i < rp.size(); ++i) {
        J[j][i] = (rp[i] - rm[i]) * inv;
      }
    }
  }
};

}  // namespace

double pose_objective(const Image& L, const Image& B, const DepthMap& D,
                      const Intrinsics& K, const Pose6& p, const EnergyParams& params) {
  PoseProblem prob(L, B, D, K, params);
  std::vector<double> scratch;
  return prob.objective(p, scratch).phi;
}

Vec6 pose_objective_gradient(const Image& L, const Image& B, const DepthMap& D,
                             const Intrinsics& K, const Pose6& p,
                             const EnergyParams& params) {
  PoseProblem prob(L, B, D, K, params);
  const BlurOperator op = BlurOperator::build(p, D, K, params.N);
  std::vector<double> r;
  prob.residuals(p, op.valid_mask(), r);
  std::vector<std::vector<double>> J;
  prob.jacobian(p, op.valid_mask(), J);
  Vec6 g;
  for (int j = 0; j < 6; ++j) {
    double dot = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      dot += J[j][i] * r[i];
    }
    g[j] = 2.0 * dot;
  }
  g += 2.0 * params.mu1 * p.to_vector();
  return g;
}

std::pair<Pose6, PoseSolveReport> solve_pose(const Image& L, const Image& B,
                                             const DepthMap& D, const Intrinsics& K,
                                             const Pose6& p0, const EnergyParams& params) {
  params.validate();
  if (!pose_feasible(p0, params)) {
    throw ValidationError("initial pose lies outside the feasible box");
  }
  PoseProblem prob(L, B, D, K, params);

  PoseSolveReport report;
  report.initial = p0;

  const std::size_t minStrict =
      static_cast<std::size_t>(kMinValidFraction * static_cast<double>(D.valid_count()));

  Pose6 p = p0;
  std::vector<double> r, scratch;
  {
    const BlurOperator op = BlurOperator::build(p, D, K, params.N);
    prob.residuals(p, op.valid_mask(), r);
  }
  double phi = prob.objective_from(r, p);
  report.energyTrace.push_back(phi);

  double lambda = 1e-3;
  bool anyAccepted = false;
  std::string reason = "max-iterations";
  bool converged = false;

  std::vector<std::vector<double>> J;
  for (int iter = 0; iter < params.lmMaxIterations; ++iter) {
    const BlurOperator op = BlurOperator::build(p, D, K, params.N);
    prob.residuals(p, op.valid_mask(), r);
    phi = prob.objective_from(r, p);
    prob.jacobian(p, op.valid_mask(), J);

    Mat6 H = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (int a = 0; a < 6; ++a) {
      for (int b = a; b < 6; ++b) {
        double dot = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
          dot += J[a][i] * J[b][i];
        }
        H(a, b) = dot;
        H(b, a) = dot;
      }
      double dg = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) {
        dg += J[a][i] * r[i];
      }
      g[a] = dg;
    }
    // mu1 |p|^2 contributes directly to the quadratic model.
    H += params.mu1 * Mat6::Identity();
    g += params.mu1 * p.to_vector();

    bool accepted = false;
    while (true) {
      const Mat6 Hd = H + lambda * Mat6::Identity();
      Eigen::LLT<Mat6> llt(Hd);
      if (llt.info() != Eigen::Success) {
        lambda *= 4.0;
        if (lambda > kDampingCeiling) {
          break;
        }
        continue;
      }
      const Vec6 delta = llt.solve(-g);
      if (delta.norm() < kStepTol) {
        reason = "step-tolerance";
        converged = true;
        break;
      }
      Pose6 trial;
      try {
        trial = Pose6::from_vector(p.to_vector() + delta);
      } catch (const ValidationError&) {
        lambda *= 4.0;
        if (lambda > kDampingCeiling) break;
        continue;
      }
      if (!pose_feasible(trial, params)) {
        // Projection by rejection: shrink the step until it stays inside.
        lambda *= 4.0;
        if (lambda > kDampingCeiling) {
          break;
        }
        continue;
      }
      const PoseProblem::Evaluation eval = prob.objective(trial, scratch);
      if (eval.strictCount < minStrict) {
        // The step buys its energy drop by pushing pixels out of frame.
        lambda *= 4.0;
        if (lambda > kDampingCeiling) {
          break;
        }
        continue;
      }
      const double phiTrial = eval.phi;
      const double predicted = delta.dot(H * delta) + 2.0 * lambda * delta.squaredNorm();
      const double actual = phi - phiTrial;
      if (std::isfinite(phiTrial) && actual > 0.0) {
        const double rho = predicted > 0.0 ? actual / predicted : 1.0;
        p = trial;
        const double rel = actual / std::max(std::abs(phi), 1e-30);
        phi = phiTrial;
        report.energyTrace.push_back(phi);
        ++report.iterations;
        anyAccepted = true;
        accepted = true;
        if (rho > 0.75) {
          lambda = std::max(lambda / 3.0, 1e-12);
        } else if (rho < 0.25) {
          lambda *= 2.0;
        }
        if (rel < kObjectiveTol) {
          reason = "objective-tolerance";
          converged = true;
        }
        break;
      }
      lambda *= 4.0;
      if (lambda > kDampingCeiling) {
        break;
      }
    }

    if (converged) {
      break;
    }
    if (!accepted) {
      if (lambda > kDampingCeiling) {
        reason = "damping-ceiling";
      } else {
        reason = "no-descent";
      }
      converged = false;
      break;
    }
  }

  if (!anyAccepted && !converged) {
    // No accepted step at all: hand back the start point.
    report.final_pose = p0;
    report.converged = false;
    report.reason = reason == "max-iterations" ? "no-descent" : reason;
    return {p0, report};
  }

  report.final_pose = p;
  report.converged = converged;
  report.reason = reason;
  return {p, report};
}

}  // namespace deblur
