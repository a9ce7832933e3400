#pragma once

#include "tact/graph.hpp"

namespace tact {

// Differentiable spatial kernels. Coordinates are normalized with the
// pixel-center convention: index i in [0,W) maps to (2i+1)/W - 1, so an
// identity theta self-samples exactly at any resolution. Coordinates
// outside [-1,1] sample zeros.

inline Tensor identity_theta(DType dt) {
  const double v[6] = {1, 0, 0, 0, 1, 0};
  return Tensor::from({2, 3}, dt, std::span<const double>(v, 6));
}

// theta [2,3] -> grid [2,H,W]; channel 0 holds x, channel 1 holds y.
// grid[.,i,j] = theta * (xbar_j, ybar_i, 1)^T.
Var affine_grid(Graph& g, Var theta, int64_t out_h, int64_t out_w);

// Bilinear sampling of feature [C,H,W] at grid [2,H',W'] -> [C,H',W'].
Var grid_sample(Graph& g, Var feature, Var grid);

// Modulated deformable convolution, stride 1, same padding.
//   x [Cin,H,W], offsets [2*Kh*Kw,H,W] as (dy,dx) in pixel units on the
//   input lattice, masks [Kh*Kw,H,W] in [0,1], weights [Cout,Cin,Kh,Kw]
//   (odd Kh,Kw), bias [Cout] -> [Cout,H,W].
// Tap k at output p samples x bilinearly at p + p_k + offset_k(p),
// scaled by mask_k(p).
Var modulated_deform_conv(Graph& g, Var x, Var offsets, Var masks, Var weights, Var bias);

// Parameter-level composition: (a o b)(p) = a(b(p)) for 2x3 affines in
// homogeneous coordinates.
Tensor compose_affine(const Tensor& a, const Tensor& b);

}  // namespace tact
