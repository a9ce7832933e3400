#include "tact/warp.hpp"

#include "kernels.hpp"

namespace tact {

Var affine_grid(Graph& g, Var theta, int64_t out_h, int64_t out_w) {
  const Tensor& t = g.value(theta);
  check(t.rank() == 2 && t.dim(0) == 2 && t.dim(1) == 3,
        "affine_grid: theta must be [2,3], got " + shape_str(t.shape()));
  check(out_h >= 1 && out_w >= 1, "affine_grid: output extents must be >= 1");
  OpAttrs at;
  at.i0 = out_h;
  at.i1 = out_w;
  return g.emit(OpKind::kAffineGrid, {theta.id}, at, kernels::affine_grid(t, out_h, out_w));
}

Var grid_sample(Graph& g, Var feature, Var grid) {
  const Tensor& x = g.value(feature);
  const Tensor& gr = g.value(grid);
  check(x.rank() == 3, "grid_sample: feature must be [C,H,W], got " + shape_str(x.shape()));
  check(gr.rank() == 3 && gr.dim(0) == 2,
        "grid_sample: grid must be [2,H',W'], got " + shape_str(gr.shape()));
  return g.emit(OpKind::kGridSample, {feature.id, grid.id}, {}, kernels::grid_sample(x, gr));
}

Var modulated_deform_conv(Graph& g, Var x, Var offsets, Var masks, Var weights, Var bias) {
  const Tensor& tx = g.value(x);
  const Tensor& to = g.value(offsets);
  const Tensor& tm = g.value(masks);
  const Tensor& tw = g.value(weights);
  const Tensor& tb = g.value(bias);
  check(tx.rank() == 3, "mod_deform_conv: x must be [Cin,H,W], got " + shape_str(tx.shape()));
  check(tw.rank() == 4, "mod_deform_conv: weights must be [Cout,Cin,Kh,Kw], got " +
                            shape_str(tw.shape()));
  check(tw.dim(1) == tx.dim(0), "mod_deform_conv: channel mismatch, x " + shape_str(tx.shape()) +
                                    " vs weights " + shape_str(tw.shape()));
  const int64_t kh = tw.dim(2), kw = tw.dim(3);
  check(kh % 2 == 1 && kw % 2 == 1, "mod_deform_conv: kernel extents must be odd for same padding");
  const int64_t k = kh * kw;
  check(to.rank() == 3 && tm.rank() == 3, "mod_deform_conv: field tensors must be rank 3");
  check(to.dim(0) == 2 * k && tm.dim(0) == k,
        "mod_deform_conv: field channels (" + std::to_string(to.dim(0)) + "," +
            std::to_string(tm.dim(0)) + ") do not match kernel lattice of " + std::to_string(k) +
            " taps");
  check(to.dim(1) == tx.dim(1) && to.dim(2) == tx.dim(2) && tm.dim(1) == tx.dim(1) &&
            tm.dim(2) == tx.dim(2),
        "mod_deform_conv: field spatial extents must match x");
  check(tb.rank() == 1 && tb.dim(0) == tw.dim(0), "mod_deform_conv: bias must be [Cout]");
  for (int64_t i = 0; i < tm.numel(); ++i)
    check(tm.at(i) >= -1e-9 && tm.at(i) <= 1.0 + 1e-9,
          "mod_deform_conv: masks must lie in [0,1]");
  return g.emit(OpKind::kModDeformConv, {x.id, offsets.id, masks.id, weights.id, bias.id}, {},
                kernels::mod_deform_conv(tx, to, tm, tw, tb));
}

Tensor compose_affine(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && a.dim(0) == 2 && a.dim(1) == 3 && b.shape() == a.shape(),
        "compose_affine: expects two [2,3] tensors");
  Tensor out({2, 3}, a.dtype());
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c)
      out.set(r * 3 + c, a.at(r * 3 + 0) * b.at(0 + c) + a.at(r * 3 + 1) * b.at(3 + c));
    out.set(r * 3 + 2,
            a.at(r * 3 + 0) * b.at(2) + a.at(r * 3 + 1) * b.at(5) + a.at(r * 3 + 2));
  }
  return out;
}

}  // namespace tact
