#pragma once

#include "depthdeblur/blur_operator.hpp"
#include "depthdeblur/core_types.hpp"

namespace deblur {

/// Per-pixel spatial-smoothness weights combining image- and depth-edge
/// attenuation: mu2 exp(-|grad B|^2 / sigmaB^2) + mu3 exp(-|grad D|^2 / sigmaD^2).
/// Values lie in (0, mu2 + mu3] and shrink where either field has an edge.
struct EdgeWeightField {
  int height = 0;
  int width = 0;
  std::vector<double> w;

  std::size_t idx(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
};

// The one discrete gradient used everywhere (data term, flow smoothness, TV,
// edge weights): forward differences with replicate boundary, so the last
// column/row difference is zero.
void forward_diff_plane(const double* in, int h, int w, double* gx, double* gy);

/// Adjoint of forward_diff_plane: out = Gx^T gx + Gy^T gy.
void forward_diff_adjoint_plane(const double* gx, const double* gy, int h, int w, double* out);

EdgeWeightField edge_weights(const Image& B, const DepthMap& D, const EnergyParams& params);

/// |A_p(L) - B|_F^2 + |grad A_p(L) - grad B|_F^2 over pixels valid in every
/// exposure sample (gradient entries additionally require the forward
/// neighbour to be valid).
double data_term(const Image& L, const Image& B, const BlurOperator& op);

/// Anisotropic total variation: sum of |forward differences| over all pixels
/// and channels.
double tv_l1(const Image& L);

/// Edge-weighted flow smoothness S(p) = sum w(i,j) |grad F(p)(i,j)|^2 over
/// pixels with valid flow (gradient entries require a valid forward neighbour).
double flow_smoothness(const FlowField& flow, const EdgeWeightField& weights);

/// mu1 |p|^2 + S(p) + mu4 * TV(L). mu1 < 0 makes the first term a reward for
/// nonzero motion.
double reg_term(const Pose6& p, const Image& L, const FlowField& flow,
                const EdgeWeightField& weights, const EnergyParams& params);

/// Full objective: data_term + reg_term with the operator and flow built from
/// (p, D, K).
double total_energy(const Image& L, const Image& B, const Pose6& p,
                    const DepthMap& D, const Intrinsics& K, const EnergyParams& params);

}  // namespace deblur
