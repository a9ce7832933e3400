#pragma once

// Internal: pure tensor-in/tensor-out kernels behind the graph ops.
// Backward kernels accumulate (+=) into the destination gradients.

#include "tact/tensor.hpp"

namespace tact::kernels {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_(const Tensor& x);
void relu_bwd(const Tensor& x, const Tensor& gout, Tensor& gx);
void sigmoid_bwd(const Tensor& y, const Tensor& gout, Tensor& gx);
void tanh_bwd(const Tensor& y, const Tensor& gout, Tensor& gx);

Tensor matmul(const Tensor& a, const Tensor& b);
void matmul_bwd(const Tensor& a, const Tensor& b, const Tensor& gout, Tensor* ga, Tensor* gb);

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int64_t stride, int64_t pad);
void conv2d_bwd(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad, const Tensor& gout,
                Tensor* gx, Tensor* gw, Tensor* gb);

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
void linear_bwd(const Tensor& x, const Tensor& w, const Tensor& gout, Tensor* gx, Tensor* gw,
                Tensor* gb);

Tensor pair_concat(const Tensor& a, const Tensor& b);
void pair_concat_bwd(const Tensor& gout, const Tensor& a, const Tensor& b, Tensor* ga, Tensor* gb);

Tensor info_nce(const Tensor& scores);
void info_nce_bwd(const Tensor& scores, const Tensor& gout, Tensor& gs);

// S[i,j] = w2 . relu(W1a a_i + W1b b_j + b1) + b2, with w1 = [W1a | W1b].
Tensor critic_scores(const Tensor& a, const Tensor& b, const Tensor& w1, const Tensor& b1,
                     const Tensor& w2, const Tensor& b2);
void critic_scores_bwd(const Tensor& a, const Tensor& b, const Tensor& w1, const Tensor& b1,
                       const Tensor& w2, const Tensor& gout, Tensor* ga, Tensor* gb, Tensor* gw1,
                       Tensor* gb1, Tensor* gw2, Tensor* gb2);

Tensor affine_grid(const Tensor& theta, int64_t out_h, int64_t out_w);
void affine_grid_bwd(const Tensor& gout, Tensor& gtheta);

Tensor grid_sample(const Tensor& x, const Tensor& grid);
void grid_sample_bwd(const Tensor& x, const Tensor& grid, const Tensor& gout, Tensor* gx,
                     Tensor* ggrid);

Tensor mod_deform_conv(const Tensor& x, const Tensor& off, const Tensor& mask, const Tensor& w,
                       const Tensor& bias);
void mod_deform_conv_bwd(const Tensor& x, const Tensor& off, const Tensor& mask, const Tensor& w,
                         const Tensor& gout, Tensor* gx, Tensor* goff, Tensor* gmask, Tensor* gw,
                         Tensor* gb);

}  // namespace tact::kernels
