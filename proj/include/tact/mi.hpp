#pragma once

#include <array>
#include <vector>

#include "tact/nets.hpp"

namespace tact::mi {

// Exact finite joint distribution over 2 or 3 variables, row-major.
struct DiscreteJoint {
  std::vector<int64_t> sizes;
  std::vector<double> pmf;

  static DiscreteJoint make(std::vector<int64_t> sizes, std::vector<double> pmf);
  int vars() const { return static_cast<int>(sizes.size()); }
  double at2(int64_t a, int64_t b) const { return pmf[static_cast<size_t>(a * sizes[1] + b)]; }
  double at3(int64_t a, int64_t b, int64_t c) const {
    return pmf[static_cast<size_t>((a * sizes[1] + b) * sizes[2] + c)];
  }
};

// Marginalize one axis away (3-var -> 2-var).
DiscreteJoint marginalize(const DiscreteJoint& j, int drop_axis);
// Reorder axes of a 3-var joint.
DiscreteJoint permute3(const DiscreteJoint& j, int a0, int a1, int a2);

// I(a;b) in nats, 0*log 0 := 0. Non-negative.
double mi_discrete(const DiscreteJoint& joint);
// I(a;b|c) = sum_c p(c) * I(a;b | C=c) in nats for a 3-var joint.
double cmi_discrete(const DiscreteJoint& joint);
// |I(a;b|c) - (I(a;b) - I(b;c) + I(b;c|a))| for a joint over (a,b,c);
// an exact chain-rule identity, so the residual is 0 for every pmf.
double decomposition_residual(const DiscreteJoint& joint);

// Contrastive lower bound on I between paired batches. Rank-2 [B,D]
// inputs are used as-is; rank-4 [B,C,h,w] inputs are global-average
// pooled to [B,C]. Bounded above by log B.
Var estimate_mi_contrastive(Graph& g, Var batch_a, Var batch_b, const Critic& critic);

struct MITermSet {
  double i_y_zt = 0, i_y_zsupp = 0, i_y_ztilde = 0, i_zt_ztilde = 0, i_zsupp_ztilde = 0;
};

struct MiLossResult {
  Var loss;
  MITermSet terms;
};

// Assembled feature-level objective:
//   [I(y;zt) - I(zt;zt~)] + [I(y;zsupp) - I(zsupp;zt~)] - alpha*[I(y;zt~) - I(zt;zt~)]
// grouped so the I(zt;zt~) term carries an exact (alpha-1) coefficient.
// Multi-frame supports enter as the mean over deltas of their terms.
MiLossResult mi_loss(Graph& g, Var y_emb, Var z_t, const std::vector<Var>& z_supp, Var z_tilde,
                     const Critics& critics, double alpha);

// Fixed (untrained) strided-conv embedding of ground-truth heatmaps to a
// C-vector; deterministic in its input, zero maps to zero.
Tensor embed_label(const Tensor& heatmaps, int out_dim);

}  // namespace tact::mi
