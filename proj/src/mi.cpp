#include "tact/mi.hpp"

#include <cmath>

namespace tact::mi {

DiscreteJoint DiscreteJoint::make(std::vector<int64_t> sizes, std::vector<double> pmf) {
  check(sizes.size() == 2 || sizes.size() == 3, "DiscreteJoint: must have 2 or 3 variables");
  int64_t n = 1;
  for (int64_t s : sizes) {
    check(s >= 1, "DiscreteJoint: alphabet sizes must be >= 1");
    n *= s;
  }
  check(static_cast<int64_t>(pmf.size()) == n, "DiscreteJoint: pmf length does not match sizes");
  double total = 0.0;
  for (double p : pmf) {
    check(p >= 0.0, "DiscreteJoint: negative probability");
    total += p;
  }
  check(std::abs(total - 1.0) <= 1e-12, "DiscreteJoint: pmf sums to " + std::to_string(total));
  return DiscreteJoint{std::move(sizes), std::move(pmf)};
}

DiscreteJoint marginalize(const DiscreteJoint& j, int drop_axis) {
  check(j.vars() == 3 && drop_axis >= 0 && drop_axis < 3, "marginalize: expects a 3-var joint");
  std::vector<int64_t> sizes;
  for (int i = 0; i < 3; ++i)
    if (i != drop_axis) sizes.push_back(j.sizes[static_cast<size_t>(i)]);
  std::vector<double> pmf(static_cast<size_t>(sizes[0] * sizes[1]), 0.0);
  for (int64_t a = 0; a < j.sizes[0]; ++a)
    for (int64_t b = 0; b < j.sizes[1]; ++b)
      for (int64_t c = 0; c < j.sizes[2]; ++c) {
        int64_t idx[3] = {a, b, c};
        int64_t keep[2];
        int k = 0;
        for (int i = 0; i < 3; ++i)
          if (i != drop_axis) keep[k++] = idx[i];
        pmf[static_cast<size_t>(keep[0] * sizes[1] + keep[1])] += j.at3(a, b, c);
      }
  DiscreteJoint out;
  out.sizes = std::move(sizes);
  out.pmf = std::move(pmf);
  return out;
}

DiscreteJoint permute3(const DiscreteJoint& j, int a0, int a1, int a2) {
  check(j.vars() == 3, "permute3: expects a 3-var joint");
  DiscreteJoint out;
  out.sizes = {j.sizes[static_cast<size_t>(a0)], j.sizes[static_cast<size_t>(a1)],
               j.sizes[static_cast<size_t>(a2)]};
  out.pmf.assign(j.pmf.size(), 0.0);
  for (int64_t a = 0; a < j.sizes[0]; ++a)
    for (int64_t b = 0; b < j.sizes[1]; ++b)
      for (int64_t c = 0; c < j.sizes[2]; ++c) {
        const int64_t idx[3] = {a, b, c};
        out.pmf[static_cast<size_t>((idx[a0] * out.sizes[1] + idx[a1]) * out.sizes[2] + idx[a2])] =
            j.at3(a, b, c);
      }
  return out;
}

double mi_discrete(const DiscreteJoint& joint) {
  check(joint.vars() == 2, "mi_discrete: expects a 2-var joint");
  const int64_t na = joint.sizes[0], nb = joint.sizes[1];
  std::vector<double> pa(static_cast<size_t>(na), 0.0), pb(static_cast<size_t>(nb), 0.0);
  for (int64_t a = 0; a < na; ++a)
    for (int64_t b = 0; b < nb; ++b) {
      pa[static_cast<size_t>(a)] += joint.at2(a, b);
      pb[static_cast<size_t>(b)] += joint.at2(a, b);
    }
  double mi = 0.0;
  for (int64_t a = 0; a < na; ++a)
    for (int64_t b = 0; b < nb; ++b) {
      const double p = joint.at2(a, b);
      if (p <= 0.0) continue;  // 0 * log 0 := 0
      mi += p * std::log(p / (pa[static_cast<size_t>(a)] * pb[static_cast<size_t>(b)]));
    }
  return mi;
}

double cmi_discrete(const DiscreteJoint& joint) {
  check(joint.vars() == 3, "cmi_discrete: expects a 3-var joint");
  const int64_t na = joint.sizes[0], nb = joint.sizes[1], nc = joint.sizes[2];
  double cmi = 0.0;
  for (int64_t c = 0; c < nc; ++c) {
    double pc = 0.0;
    for (int64_t a = 0; a < na; ++a)
      for (int64_t b = 0; b < nb; ++b) pc += joint.at3(a, b, c);
    if (pc <= 0.0) continue;
    // conditional joint p(a,b | C=c)
    std::vector<double> cond(static_cast<size_t>(na * nb));
    for (int64_t a = 0; a < na; ++a)
      for (int64_t b = 0; b < nb; ++b)
        cond[static_cast<size_t>(a * nb + b)] = joint.at3(a, b, c) / pc;
    DiscreteJoint cj;
    cj.sizes = {na, nb};
    cj.pmf = std::move(cond);
    cmi += pc * mi_discrete(cj);
  }
  return cmi;
}

double decomposition_residual(const DiscreteJoint& joint) {
  check(joint.vars() == 3, "decomposition_residual: expects a 3-var joint over (y, zt~, z)");
  // axes: 0 = y, 1 = z~, 2 = z
  const double lhs = cmi_discrete(joint);                       // I(y;z~|z)
  const double i_y_zt = mi_discrete(marginalize(joint, 2));     // I(y;z~)
  const double i_zt_z = mi_discrete(marginalize(joint, 0));     // I(z~;z)
  const double i_zt_z_given_y = cmi_discrete(permute3(joint, 1, 2, 0));  // I(z~;z|y)
  return std::abs(lhs - (i_y_zt - i_zt_z + i_zt_z_given_y));
}

namespace {

Var as_batch_matrix(Graph& g, Var v, const char* which) {
  const Tensor& t = g.value(v);
  if (t.rank() == 2) return v;
  if (t.rank() == 4) return g.global_avg_pool(v);
  fail(std::string("estimate_mi_contrastive: ") + which +
       " must be [B,D] or [B,C,h,w], got " + shape_str(t.shape()));
}

}  // namespace

Var estimate_mi_contrastive(Graph& g, Var batch_a, Var batch_b, const Critic& critic) {
  check(critic.initialized(), "estimate_mi_contrastive: missing critic");
  Var a = as_batch_matrix(g, batch_a, "batch_a");
  Var b = as_batch_matrix(g, batch_b, "batch_b");
  const int64_t ba = g.value(a).dim(0), bb = g.value(b).dim(0);
  check(ba == bb, "estimate_mi_contrastive: batches must pair up, got " + std::to_string(ba) +
                      " vs " + std::to_string(bb));
  check(ba >= 2, "estimate_mi_contrastive: batch size must be >= 2, got " + std::to_string(ba));
  return g.info_nce(critic.score_matrix(g, a, b));
}

MiLossResult mi_loss(Graph& g, Var y_emb, Var z_t, const std::vector<Var>& z_supp, Var z_tilde,
                     const Critics& critics, double alpha) {
  check(!z_supp.empty(), "mi_loss: needs at least one supporting-frame batch");

  Var i_y_zt = estimate_mi_contrastive(g, y_emb, z_t, critics.y_zt);
  Var i_y_ztilde = estimate_mi_contrastive(g, y_emb, z_tilde, critics.y_ztilde);
  Var i_zt_ztilde = estimate_mi_contrastive(g, z_t, z_tilde, critics.zt_ztilde);

  // mean over deltas for the two supporting-frame terms
  const double inv = 1.0 / static_cast<double>(z_supp.size());
  Var i_y_zsupp, i_zsupp_ztilde;
  for (Var zs : z_supp) {
    Var t1 = estimate_mi_contrastive(g, y_emb, zs, critics.y_zsupp);
    Var t2 = estimate_mi_contrastive(g, zs, z_tilde, critics.zsupp_ztilde);
    i_y_zsupp = i_y_zsupp.valid() ? g.add(i_y_zsupp, t1) : t1;
    i_zsupp_ztilde = i_zsupp_ztilde.valid() ? g.add(i_zsupp_ztilde, t2) : t2;
  }
  i_y_zsupp = g.scale(i_y_zsupp, inv);
  i_zsupp_ztilde = g.scale(i_zsupp_ztilde, inv);

  // [I(y;zt) - I(zt;zt~)] + [I(y;zs) - I(zs;zt~)] - alpha*[I(y;zt~) - I(zt;zt~)]
  // == I(y;zt) + I(y;zs) - alpha*I(y;zt~) - I(zs;zt~) + (alpha-1)*I(zt;zt~)
  Var loss = g.add(i_y_zt, i_y_zsupp);
  loss = g.sub(loss, g.scale(i_y_ztilde, alpha));
  loss = g.sub(loss, i_zsupp_ztilde);
  loss = g.add(loss, g.scale(i_zt_ztilde, alpha - 1.0));

  MiLossResult out;
  out.loss = loss;
  out.terms.i_y_zt = g.value(i_y_zt).at(0);
  out.terms.i_y_zsupp = g.value(i_y_zsupp).at(0);
  out.terms.i_y_ztilde = g.value(i_y_ztilde).at(0);
  out.terms.i_zt_ztilde = g.value(i_zt_ztilde).at(0);
  out.terms.i_zsupp_ztilde = g.value(i_zsupp_ztilde).at(0);
  return out;
}

Tensor embed_label(const Tensor& heatmaps, int out_dim) {
  check(heatmaps.rank() == 3, "embed_label: expects [J,h,w] heatmaps");
  const int64_t j = heatmaps.dim(0);
  const int hidden = 16;
  // fixed weights from a constant seed; zero biases so zero maps embed to zero
  Rng rng(Rng::mix(0x7ac7e3b1u, "embed_label"));
  const DType dt = heatmaps.dtype();
  Tensor w1 = randn({hidden, j, 3, 3}, dt, rng, std::sqrt(2.0 / (9.0 * static_cast<double>(j))));
  Tensor w2 = randn({out_dim, hidden, 3, 3}, dt, rng, std::sqrt(2.0 / (9.0 * hidden)));
  Graph g(dt);
  Var x = g.leaf(heatmaps);
  x = g.relu(g.conv2d(x, g.leaf(w1), 2, 1));
  x = g.relu(g.conv2d(x, g.leaf(w2), 2, 1));
  return g.value(g.global_avg_pool(x));
}

}  // namespace tact::mi
