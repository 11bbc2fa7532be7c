#include "depthdeblur/energy.hpp"

#include "depthdeblur/geometry.hpp"

#include <cmath>
#include <vector>

namespace deblur {

void forward_diff_plane(const double* in, int h, int w, double* gx, double* gy) {
  for (int y = 0; y < h; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      const std::size_t i = row + x;
      gx[i] = (x + 1 < w) ? in[i + 1] - in[i] : 0.0;
      gy[i] = (y + 1 < h) ? in[i + w] - in[i] : 0.0;
    }
  }
}

void forward_diff_adjoint_plane(const double* gx, const double* gy, int h, int w, double* out) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = 0.0;
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w) {
        out[i] -= gx[i];
        out[i + 1] += gx[i];
      }
      if (y + 1 < h) {
        out[i] -= gy[i];
        out[i + w] += gy[i];
      }
    }
  }
}

EdgeWeightField edge_weights(const Image& B, const DepthMap& D, const EnergyParams& params) {
  if (B.height() != D.height() || B.width() != D.width()) {
    throw DimensionMismatch("image and depth dimensions differ");
  }
  const int h = B.height();
  const int w = B.width();
  const std::size_t n = B.pixels();

  // Image gradient energy summed over channels.
  std::vector<double> gb2(n, 0.0);
  std::vector<double> gx(n), gy(n);
  for (int c = 0; c < B.channels(); ++c) {
    forward_diff_plane(B.plane(c), h, w, gx.data(), gy.data());
    for (std::size_t i = 0; i < n; ++i) {
      gb2[i] += gx[i] * gx[i] + gy[i] * gy[i];
    }
  }

  // Depth gradients on range-normalized depth so sigmaD is scale-free.
  // Differences that would cross an invalid pixel are dropped.
  std::vector<double> gd2(n, 0.0);
  if (D.valid_count() > 0) {
    const auto [lo, hi] = D.valid_range();
    const double span = hi - lo;
    const double inv = span > 0.0 ? 1.0 / span : 0.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!D.valid_at(y, x)) {
          continue;
        }
        const double d = (D.at(y, x) - lo) * inv;
        double dx = 0.0, dy = 0.0;
        if (x + 1 < w && D.valid_at(y, x + 1)) {
          dx = (D.at(y, x + 1) - lo) * inv - d;
        }
        if (y + 1 < h && D.valid_at(y + 1, x)) {
          dy = (D.at(y + 1, x) - lo) * inv - d;
        }
        gd2[i] = dx * dx + dy * dy;
      }
    }
  }

  EdgeWeightField field;
  field.height = h;
  field.width = w;
  field.w.resize(n);
  const double invB = 1.0 / (params.sigmaB * params.sigmaB);
  const double invD = 1.0 / (params.sigmaD * params.sigmaD);
  for (std::size_t i = 0; i < n; ++i) {
    field.w[i] = params.mu2 * std::exp(-gb2[i] * invB) + params.mu3 * std::exp(-gd2[i] * invD);
  }
  return field;
}

double data_term(const Image& L, const Image& B, const BlurOperator& op) {
  if (!L.same_shape(B)) {
    throw DimensionMismatch("latent and blurry images differ in shape");
  }
  if (L.height() != op.height() || L.width() != op.width()) {
    throw DimensionMismatch("images do not match operator dimensions");
  }
  const int h = L.height();
  const int w = L.width();
  const std::size_t n = L.pixels();
  const std::vector<std::uint8_t>& m = op.valid_mask();

  std::vector<double> bhat(n);
  double sum = 0.0;
  for (int c = 0; c < L.channels(); ++c) {
    op.apply_plane(L.plane(c), bhat.data());
    const double* b = B.plane(c);
    for (std::size_t i = 0; i < n; ++i) {
      if (!m[i]) {
        continue;
      }
      const double r = bhat[i] - b[i];
      sum += r * r;
    }
    // Gradient part; a forward difference needs both of its pixels valid.
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!m[i]) {
          continue;
        }
        if (x + 1 < w && m[i + 1]) {
          const double r = (bhat[i + 1] - bhat[i]) - (b[i + 1] - b[i]);
          sum += r * r;
        }
        if (y + 1 < h && m[i + w]) {
          const double r = (bhat[i + w] - bhat[i]) - (b[i + w] - b[i]);
          sum += r * r;
        }
      }
    }
  }
  return sum;
}

double tv_l1(const Image& L) {
  const int h = L.height();
  const int w = L.width();
  double sum = 0.0;
  for (int c = 0; c < L.channels(); ++c) {
    const double* p = L.plane(c);
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

double flow_smoothness(const FlowField& flow, const EdgeWeightField& weights) {
  if (flow.height != weights.height || flow.width != weights.width) {
    throw DimensionMismatch("flow and weight field dimensions differ");
  }
  const int h = flow.height;
  const int w = flow.width;
  double sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!flow.valid[i]) {
        continue;
      }
      double g = 0.0;
      if (x + 1 < w && flow.valid[i + 1]) {
        const double du = flow.du[i + 1] - flow.du[i];
        const double dv = flow.dv[i + 1] - flow.dv[i];
        g += du * du + dv * dv;
      }
      if (y + 1 < h && flow.valid[i + w]) {
        const double du = flow.du[i + w] - flow.du[i];
        const double dv = flow.dv[i + w] - flow.dv[i];
        g += du * du + dv * dv;
      }
      sum += weights.w[i] * g;
    }
  }
  return sum;
}

double reg_term(const Pose6& p, const Image& L, const FlowField& flow,
                const EdgeWeightField& weights, const EnergyParams& params) {
  return params.mu1 * p.squared_norm() + flow_smoothness(flow, weights) +
         params.mu4 * tv_l1(L);
}

double total_energy(const Image& L, const Image& B, const Pose6& p,
                    const DepthMap& D, const Intrinsics& K, const EnergyParams& params) {
  validate_pair(B, D);
  const BlurOperator op = BlurOperator::build(p, D, K, params.N);
  const FlowField flow = induced_flow(p, D, K);
  const EdgeWeightField E = edge_weights(B, D, params);
  return data_term(L, B, op) + reg_term(p, L, flow, E, params);
}

}  // namespace deblur
