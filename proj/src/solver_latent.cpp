#include "depthdeblur/solver_latent.hpp"

#include "depthdeblur/energy.hpp"

#include <algorithm>
#include <cmath>

namespace deblur {

namespace {

struct GradMasks {
  std::vector<std::uint8_t> gx;
  std::vector<std::uint8_t> gy;
};

GradMasks gradient_masks(const std::vector<std::uint8_t>& strict, int h, int w) {
  GradMasks m;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  m.gx.assign(n, 0);
  m.gy.assign(n, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!strict[i]) {
        continue;
      }
      if (x + 1 < w && strict[i + 1]) {
        m.gx[i] = 1;
      }
      if (y + 1 < h && strict[i + w]) {
        m.gy[i] = 1;
      }
    }
  }
  return m;
}

// Normal operator of the primal subproblem:
//   M x = A^T [ W (A x) + G^T ( Wg (G (A x)) ) ] + x / (2 eta)
struct NormalOp {
  const BlurOperator& A;
  const std::vector<std::uint8_t>& strict;
  const GradMasks& masks;
  int h, w;
  double invTwoEta;

  mutable std::vector<double> u, gx, gy, s;

  explicit NormalOp(const BlurOperator& op, const std::vector<std::uint8_t>& strictMask,
                    const GradMasks& gradMasks, double eta)
      : A(op), strict(strictMask), masks(gradMasks),
        h(op.height()), w(op.width()), invTwoEta(1.0 / (2.0 * eta)),
        u(op.pixels()), gx(op.pixels()), gy(op.pixels()), s(op.pixels()) {}

  void data_part(const double* x, double* out) const {
    A.apply_plane(x, u.data());
    forward_diff_plane(u.data(), h, w, gx.data(), gy.data());
    const std::size_t n = u.size();
    for (std::size_t i = 0; i < n; ++i) {
      gx[i] = masks.gx[i] ? gx[i] : 0.0;
      gy[i] = masks.gy[i] ? gy[i] : 0.0;
      u[i] = strict[i] ? u[i] : 0.0;
    }
    forward_diff_adjoint_plane(gx.data(), gy.data(), h, w, s.data());
    for (std::size_t i = 0; i < n; ++i) {
      u[i] += s[i];
    }
    A.apply_adjoint_plane(u.data(), out);
  }

  void apply(const double* x, double* out) const {
    data_part(x, out);
    const std::size_t n = u.size();
    for (std::size_t i = 0; i < n; ++i) {
      out[i] += invTwoEta * x[i];
    }
  }

  // Constant part of the right-hand side: A^T [ W B + G^T (Wg (G B)) ].
  void rhs_data(const double* b, double* out) const {
    std::copy(b, b + u.size(), u.data());
    forward_diff_plane(u.data(), h, w, gx.data(), gy.data());
    const std::size_t n = u.size();
    for (std::size_t i = 0; i < n; ++i) {
      gx[i] = masks.gx[i] ? gx[i] : 0.0;
      gy[i] = masks.gy[i] ? gy[i] : 0.0;
      u[i] = strict[i] ? u[i] : 0.0;
    }
    forward_diff_adjoint_plane(gx.data(), gy.data(), h, w, s.data());
    for (std::size_t i = 0; i < n; ++i) {
      u[i] += s[i];
    }
    A.apply_adjoint_plane(u.data(), out);
  }
};

// Standard CG on the SPD normal operator; returns iterations used, -1 on a
// non-finite breakdown. x is warm-started by the caller.
int conjugate_gradient(const NormalOp& M, const std::vector<double>& rhs,
                       std::vector<double>& x, int maxIter, double tol) {
  const std::size_t n = rhs.size();
  std::vector<double> r(n), d(n), q(n);
  M.apply(x.data(), q.data());
  double rr = 0.0, rhsNorm2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = rhs[i] - q[i];
    d[i] = r[i];
    rr += r[i] * r[i];
    rhsNorm2 += rhs[i] * rhs[i];
  }
  const double stop2 = std::max(tol * tol * rhsNorm2, 1e-60);
  int iter = 0;
  while (iter < maxIter && rr > stop2) {
    M.apply(d.data(), q.data());
    double dq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dq += d[i] * q[i];
    }
    if (!(dq > 0.0) || !std::isfinite(dq)) {
      return std::isfinite(dq) ? iter : -1;
    }
    const double alpha = rr / dq;
    double rrNew = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * d[i];
      r[i] -= alpha * q[i];
      rrNew += r[i] * r[i];
    }
    if (!std::isfinite(rrNew)) {
      return -1;
    }
    const double beta = rrNew / rr;
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = r[i] + beta * d[i];
    }
    rr = rrNew;
    ++iter;
  }
  return iter;
}

double masked_data_objective(const BlurOperator& op, const std::vector<std::uint8_t>& strict,
                             const GradMasks& masks, const double* lc, const double* bc,
                             std::vector<double>& bhat) {
  const int h = op.height();
  const int w = op.width();
  op.apply_plane(lc, bhat.data());
  double sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (strict[i]) {
        const double r = bhat[i] - bc[i];
        sum += r * r;
      }
      if (masks.gx[i]) {
        const double r = (bhat[i + 1] - bhat[i]) - (bc[i + 1] - bc[i]);
        sum += r * r;
      }
      if (masks.gy[i]) {
        const double r = (bhat[i + w] - bhat[i]) - (bc[i + w] - bc[i]);
        sum += r * r;
      }
    }
  }
  return sum;
}

double tv_of_planes(const std::vector<std::vector<double>>& planes, int h, int w) {
  double sum = 0.0;
  for (const auto& p : planes) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (x + 1 < w) {
          sum += std::abs(p[i + 1] - p[i]);
        }
        if (y + 1 < h) {
          sum += std::abs(p[i + w] - p[i]);
        }
      }
    }
  }
  return sum;
}

}  // namespace

std::pair<Image, LatentSolveReport> solve_latent(const Image& B, const BlurOperator& op,
                                                 const Image& L0, const EnergyParams& params) {
  if (!B.same_shape(L0)) {
    throw DimensionMismatch("initial latent image and observation differ in shape");
  }
  if (B.height() != op.height() || B.width() != op.width()) {
    throw DimensionMismatch("observation does not match operator dimensions");
  }
  if (!(params.eta > 0.0 && params.gamma > 0.0) || params.mu4 < 0.0 ||
      params.latentOuterIterations < 1 || params.cgMaxIterations < 1 ||
      !(params.cgTolerance > 0.0)) {
    throw ValidationError("invalid latent-solver parameters");
  }

  const int h = B.height();
  const int w = B.width();
  const int channels = B.channels();
  const std::size_t n = B.pixels();

  const std::vector<std::uint8_t>& strict = op.valid_mask();
  const GradMasks masks = gradient_masks(strict, h, w);
  NormalOp M(op, strict, masks, params.eta);

  // PD state (unclamped) per channel, plus dual fields.
  std::vector<std::vector<double>> state(channels), qx(channels), qy(channels);
  std::vector<std::vector<double>> rhsData(channels);
  for (int c = 0; c < channels; ++c) {
    state[c].assign(L0.plane(c), L0.plane(c) + n);
    qx[c].assign(n, 0.0);
    qy[c].assign(n, 0.0);
    rhsData[c].resize(n);
    M.rhs_data(B.plane(c), rhsData[c].data());
  }

  std::vector<double> gx(n), gy(n), div(n), rhs(n), bhat(n);

  auto objective_of = [&](const std::vector<std::vector<double>>& planes) {
    double obj = 0.0;
    for (int c = 0; c < channels; ++c) {
      obj += masked_data_objective(op, strict, masks, planes[c].data(), B.plane(c), bhat);
    }
    obj += params.mu4 * tv_of_planes(planes, h, w);
    return obj;
  };

  auto clamp_planes = [&](const std::vector<std::vector<double>>& planes) {
    std::vector<std::vector<double>> out(channels);
    for (int c = 0; c < channels; ++c) {
      out[c].resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        out[c][i] = std::clamp(planes[c][i], 0.0, 1.0);
      }
    }
    return out;
  };

  LatentSolveReport report;
  std::vector<std::vector<double>> best = clamp_planes(state);
  double bestObj = objective_of(best);

  const double invTwoEta = 1.0 / (2.0 * params.eta);
  int stagnation = 0;
  bool breakdown = false;

  for (int outer = 0; outer < params.latentOuterIterations; ++outer) {
    // Dual ascent with per-component projection; the normalization magnitude
    // is shared across channels so color channels use one dual field strength.
    for (int c = 0; c < channels; ++c) {
      forward_diff_plane(state[c].data(), h, w, gx.data(), gy.data());
      for (std::size_t i = 0; i < n; ++i) {
        qx[c][i] += params.gamma * gx[i];
        qy[c][i] += params.gamma * gy[i];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double mx = 0.0, my = 0.0;
      for (int c = 0; c < channels; ++c) {
        mx += qx[c][i] * qx[c][i];
        my += qy[c][i] * qy[c][i];
      }
      const double dx = std::max(1.0, std::sqrt(mx));
      const double dy = std::max(1.0, std::sqrt(my));
      for (int c = 0; c < channels; ++c) {
        qx[c][i] /= dx;
        qy[c][i] /= dy;
      }
    }

    // Primal step: CG on the normal equations, warm-started from the state.
    int innerTotal = 0;
    for (int c = 0; c < channels; ++c) {
      forward_diff_adjoint_plane(qx[c].data(), qy[c].data(), h, w, div.data());
      for (std::size_t i = 0; i < n; ++i) {
        const double v = state[c][i] - params.eta * params.mu4 * div[i];
        rhs[i] = rhsData[c][i] + invTwoEta * v;
      }
      const int used = conjugate_gradient(M, rhs, state[c], params.cgMaxIterations,
                                          params.cgTolerance);
      if (used < 0) {
        breakdown = true;
        break;
      }
      innerTotal += used;
    }
    if (breakdown) {
      report.reason = "cg-breakdown";
      break;
    }

    report.innerIterations.push_back(innerTotal);
    ++report.outerIterations;

    const auto candidate = clamp_planes(state);
    const double obj = objective_of(candidate);
    const double improvement = bestObj - obj;
    if (std::isfinite(obj) && improvement > 0.0) {
      best = candidate;
      if (improvement < 1e-7 * std::max(std::abs(bestObj), 1e-30)) {
        ++stagnation;
      } else {
        stagnation = 0;
      }
      bestObj = obj;
    } else {
      ++stagnation;
    }
    report.energyTrace.push_back(bestObj);
    if (stagnation >= 5) {
      report.converged = true;
      report.reason = "stagnation";
      break;
    }
  }

  if (!breakdown && report.reason.empty()) {
    report.converged = true;
    report.reason = "iterations-exhausted";
  }

  std::vector<double> out(n * channels);
  for (int c = 0; c < channels; ++c) {
    std::copy(best[c].begin(), best[c].end(), out.begin() + static_cast<std::size_t>(c) * n);
  }
  return {Image::clamped(h, w, channels, std::move(out)), report};
}

}  // namespace deblur
