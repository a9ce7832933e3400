#include "tact/graph.hpp"

#include <algorithm>
#include <cmath>

#include "kernels.hpp"

namespace tact {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kParam: return "param";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kConcat: return "concat";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kReshape: return "reshape";
    case OpKind::kSlice: return "slice";
    case OpKind::kLinear: return "linear";
    case OpKind::kPairConcat: return "pair_concat";
    case OpKind::kInfoNce: return "info_nce";
    case OpKind::kCriticScores: return "critic_scores";
    case OpKind::kAffineGrid: return "affine_grid";
    case OpKind::kGridSample: return "grid_sample";
    case OpKind::kModDeformConv: return "mod_deform_conv";
  }
  return "?";
}

void Graph::check_var(Var v) const {
  check(v.id >= 0 && v.id < static_cast<int32_t>(nodes_.size()), "Var does not belong to this graph");
}

const Graph::Node& Graph::node(Var v) const {
  check_var(v);
  return nodes_[static_cast<size_t>(v.id)];
}

const Tensor& Graph::value(Var v) const { return node(v).out; }

Var Graph::emit(OpKind kind, std::vector<int32_t> inputs, OpAttrs attrs, Tensor out) {
  check(out.dtype() == dtype_, std::string(op_name(kind)) + ": dtype mismatch with graph");
  check(out.all_finite(),
        std::string(op_name(kind)) + ": non-finite output rejected (shape " + shape_str(out.shape()) + ")");
  Node n;
  n.kind = kind;
  n.inputs = std::move(inputs);
  n.attrs = attrs;
  n.out = std::move(out);
  for (int32_t in : n.inputs) n.requires_grad |= nodes_[static_cast<size_t>(in)].requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Graph::leaf(Tensor t) {
  check(t.defined(), "leaf: undefined tensor");
  return emit(OpKind::kLeaf, {}, {}, std::move(t));
}

Var Graph::param(const std::string& name, const Tensor& t) {
  auto it = params_.find(name);
  if (it != params_.end()) {
    const Node& existing = nodes_[static_cast<size_t>(it->second)];
    check(existing.out.shape() == t.shape(),
          "param '" + name + "' re-registered with shape " + shape_str(t.shape()) + " != " +
              shape_str(existing.out.shape()));
    return Var{it->second};
  }
  check(t.defined(), "param: undefined tensor");
  Var v = emit(OpKind::kParam, {}, {}, t);
  nodes_[static_cast<size_t>(v.id)].requires_grad = true;
  nodes_[static_cast<size_t>(v.id)].name = name;
  params_[name] = v.id;
  return v;
}

namespace {
void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}
}  // namespace

Var Graph::add(Var a, Var b) {
  check_same_shape("add", value(a), value(b));
  return emit(OpKind::kAdd, {a.id, b.id}, {}, kernels::add(value(a), value(b)));
}

Var Graph::sub(Var a, Var b) {
  check_same_shape("sub", value(a), value(b));
  return emit(OpKind::kSub, {a.id, b.id}, {}, kernels::sub(value(a), value(b)));
}

Var Graph::mul(Var a, Var b) {
  check_same_shape("mul", value(a), value(b));
  return emit(OpKind::kMul, {a.id, b.id}, {}, kernels::mul(value(a), value(b)));
}

Var Graph::scale(Var a, double s) {
  check(std::isfinite(s), "scale: non-finite scalar");
  OpAttrs at;
  at.d0 = s;
  return emit(OpKind::kScale, {a.id}, at, kernels::scale(value(a), s));
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check(ta.rank() == 2 && tb.rank() == 2, "matmul: expects rank-2 inputs, got " +
                                              shape_str(ta.shape()) + " and " + shape_str(tb.shape()));
  check(ta.dim(1) == tb.dim(0), "matmul: inner extents differ, " + shape_str(ta.shape()) + " vs " +
                                    shape_str(tb.shape()));
  return emit(OpKind::kMatmul, {a.id, b.id}, {}, kernels::matmul(ta, tb));
}

Var Graph::conv2d(Var x, Var w, int stride, int pad) {
  return conv2d(x, w, Var{}, stride, pad);
}

Var Graph::conv2d(Var x, Var w, Var bias, int stride, int pad) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  check(tx.rank() == 3 || tx.rank() == 4, "conv2d: input rank must be 3 or 4, got " +
                                              shape_str(tx.shape()));
  check(tw.rank() == 4, "conv2d: kernel must be [Cout,Cin,Kh,Kw], got " + shape_str(tw.shape()));
  const int64_t ci = tx.dim(tx.rank() == 4 ? 1 : 0);
  check(tw.dim(1) == ci, "conv2d: input channels " + std::to_string(ci) + " vs kernel " +
                             shape_str(tw.shape()));
  check(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  const int64_t h = tx.dim(tx.rank() == 4 ? 2 : 1), wd = tx.dim(tx.rank() == 4 ? 3 : 2);
  check(h + 2 * pad >= tw.dim(2) && wd + 2 * pad >= tw.dim(3),
        "conv2d: kernel larger than padded input");
  const Tensor* tb = nullptr;
  std::vector<int32_t> inputs{x.id, w.id};
  if (bias.valid()) {
    const Tensor& b = value(bias);
    check(b.rank() == 1 && b.dim(0) == tw.dim(0),
          "conv2d: bias must be [Cout], got " + shape_str(b.shape()));
    tb = &b;
    inputs.push_back(bias.id);
  }
  OpAttrs at;
  at.i0 = stride;
  at.i1 = pad;
  return emit(OpKind::kConv2d, std::move(inputs), at, kernels::conv2d(tx, tw, tb, stride, pad));
}

Var Graph::relu(Var a) { return emit(OpKind::kRelu, {a.id}, {}, kernels::relu(value(a))); }
Var Graph::sigmoid(Var a) { return emit(OpKind::kSigmoid, {a.id}, {}, kernels::sigmoid(value(a))); }
Var Graph::tanh(Var a) { return emit(OpKind::kTanh, {a.id}, {}, kernels::tanh_(value(a))); }

Var Graph::sum(Var a) {
  const Tensor& t = value(a);
  double acc = 0.0;
  for (int64_t i = 0; i < t.numel(); ++i) acc += t.at(i);
  return emit(OpKind::kSum, {a.id}, {}, Tensor::scalar(acc, dtype_));
}

Var Graph::mean(Var a) {
  const Tensor& t = value(a);
  double acc = 0.0;
  for (int64_t i = 0; i < t.numel(); ++i) acc += t.at(i);
  return emit(OpKind::kMean, {a.id}, {}, Tensor::scalar(acc / static_cast<double>(t.numel()), dtype_));
}

Var Graph::concat(int axis, const std::vector<Var>& parts) {
  check(!parts.empty(), "concat: no inputs");
  const Tensor& first = value(parts[0]);
  check(axis >= 0 && axis < first.rank(), "concat: bad axis");
  Shape out_shape = first.shape();
  int64_t total = first.dim(axis);
  for (size_t i = 1; i < parts.size(); ++i) {
    const Tensor& t = value(parts[i]);
    check(t.rank() == first.rank(), "concat: rank mismatch");
    for (int d = 0; d < t.rank(); ++d)
      if (d != axis)
        check(t.dim(d) == first.dim(d), "concat: shape mismatch " + shape_str(t.shape()) + " vs " +
                                            shape_str(first.shape()));
    total += t.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;
  Tensor out(out_shape, dtype_);
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= first.dim(d);
  for (int d = axis + 1; d < first.rank(); ++d) inner *= first.dim(d);
  int64_t offset = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    const int64_t ext = t.dim(axis);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t e = 0; e < ext; ++e)
        for (int64_t i = 0; i < inner; ++i)
          out.set((o * total + offset + e) * inner + i, t.at((o * ext + e) * inner + i));
    offset += ext;
  }
  std::vector<int32_t> ids;
  ids.reserve(parts.size());
  for (Var p : parts) ids.push_back(p.id);
  OpAttrs at;
  at.i0 = axis;
  return emit(OpKind::kConcat, std::move(ids), at, std::move(out));
}

Var Graph::concat_channels(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_channels: no inputs");
  return concat(value(parts[0]).rank() == 4 ? 1 : 0, parts);
}

Var Graph::global_avg_pool(Var a) {
  const Tensor& t = value(a);
  check(t.rank() == 3 || t.rank() == 4, "global_avg_pool: rank must be 3 or 4, got " +
                                            shape_str(t.shape()));
  const bool batched = t.rank() == 4;
  const int64_t n = batched ? t.dim(0) : 1;
  const int64_t c = t.dim(batched ? 1 : 0);
  const int64_t hw = t.dim(batched ? 2 : 1) * t.dim(batched ? 3 : 2);
  Tensor out(batched ? Shape{n, c} : Shape{c}, dtype_);
  for (int64_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < hw; ++j) acc += t.at(i * hw + j);
    out.set(i, acc / static_cast<double>(hw));
  }
  return emit(OpKind::kGlobalAvgPool, {a.id}, {}, std::move(out));
}

Var Graph::reshape(Var a, Shape shape) {
  const Tensor& t = value(a);
  check(shape_numel(shape) == t.numel(), "reshape: element count mismatch, " +
                                             shape_str(t.shape()) + " -> " + shape_str(shape));
  Tensor out(shape, dtype_);
  for (int64_t i = 0; i < t.numel(); ++i) out.set(i, t.at(i));
  return emit(OpKind::kReshape, {a.id}, {}, std::move(out));
}

Var Graph::slice(Var a, int axis, int64_t start, int64_t len) {
  const Tensor& t = value(a);
  check(axis >= 0 && axis < t.rank(), "slice: bad axis");
  check(start >= 0 && len >= 1 && start + len <= t.dim(axis),
        "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
            ") out of bounds for extent " + std::to_string(t.dim(axis)));
  Shape out_shape = t.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  Tensor out(out_shape, dtype_);
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= t.dim(d);
  for (int d = axis + 1; d < t.rank(); ++d) inner *= t.dim(d);
  const int64_t ext = t.dim(axis);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t e = 0; e < len; ++e)
      for (int64_t i = 0; i < inner; ++i)
        out.set((o * len + e) * inner + i, t.at((o * ext + start + e) * inner + i));
  OpAttrs at;
  at.i0 = axis;
  at.i1 = start;
  at.i2 = len;
  return emit(OpKind::kSlice, {a.id}, at, std::move(out));
}

Var Graph::linear(Var x, Var w, Var b) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  const Tensor& tb = value(b);
  check(tx.rank() == 2 && tw.rank() == 2 && tb.rank() == 1,
        "linear: expects x[B,Din], w[Dout,Din], b[Dout]");
  check(tx.dim(1) == tw.dim(1) && tb.dim(0) == tw.dim(0),
        "linear: shape mismatch x" + shape_str(tx.shape()) + " w" + shape_str(tw.shape()) + " b" +
            shape_str(tb.shape()));
  return emit(OpKind::kLinear, {x.id, w.id, b.id}, {}, kernels::linear(tx, tw, tb));
}

Var Graph::pair_concat(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check(ta.rank() == 2 && tb.rank() == 2, "pair_concat: expects rank-2 inputs");
  return emit(OpKind::kPairConcat, {a.id, b.id}, {}, kernels::pair_concat(ta, tb));
}

Var Graph::info_nce(Var scores) {
  const Tensor& s = value(scores);
  check(s.rank() == 2 && s.dim(0) == s.dim(1), "info_nce: expects a square score matrix");
  check(s.dim(0) >= 2, "info_nce: batch size must be >= 2, got " + std::to_string(s.dim(0)));
  return emit(OpKind::kInfoNce, {scores.id}, {}, kernels::info_nce(s));
}

Var Graph::critic_scores(Var a, Var b, Var w1, Var b1, Var w2, Var b2) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  const Tensor& tw1 = value(w1);
  const Tensor& tb1 = value(b1);
  const Tensor& tw2 = value(w2);
  const Tensor& tb2 = value(b2);
  check(ta.rank() == 2 && tb.rank() == 2, "critic_scores: inputs must be [B,D]");
  check(tw1.rank() == 2 && tw1.dim(1) == ta.dim(1) + tb.dim(1),
        "critic_scores: w1 must be [hidden,Da+Db], got " + shape_str(tw1.shape()));
  const int64_t hidden = tw1.dim(0);
  check(tb1.rank() == 1 && tb1.dim(0) == hidden, "critic_scores: b1 must be [hidden]");
  check(tw2.rank() == 2 && tw2.dim(0) == 1 && tw2.dim(1) == hidden,
        "critic_scores: w2 must be [1,hidden]");
  check(tb2.rank() == 1 && tb2.dim(0) == 1, "critic_scores: b2 must be [1]");
  return emit(OpKind::kCriticScores, {a.id, b.id, w1.id, b1.id, w2.id, b2.id}, {},
              kernels::critic_scores(ta, tb, tw1, tb1, tw2, tb2));
}

Tensor& Graph::grad_slot(int32_t id) {
  Tensor& slot = adjoints_[static_cast<size_t>(id)];
  if (!slot.defined()) slot = Tensor(nodes_[static_cast<size_t>(id)].out.shape(), dtype_);
  return slot;
}

namespace {
// dst += src (, scaled)
void acc_add(Tensor& dst, const Tensor& src, double s = 1.0) {
  for (int64_t i = 0; i < dst.numel(); ++i) dst.set(i, dst.at(i) + s * src.at(i));
}
}  // namespace

void Graph::backward_node(int32_t id) {
  const Node& n = nodes_[static_cast<size_t>(id)];
  const Tensor& g = adjoints_[static_cast<size_t>(id)];
  auto in_val = [&](int i) -> const Tensor& {
    return nodes_[static_cast<size_t>(n.inputs[static_cast<size_t>(i)])].out;
  };
  auto needs = [&](int i) {
    return nodes_[static_cast<size_t>(n.inputs[static_cast<size_t>(i)])].requires_grad;
  };
  auto slot = [&](int i) -> Tensor& { return grad_slot(n.inputs[static_cast<size_t>(i)]); };

  switch (n.kind) {
    case OpKind::kLeaf:
    case OpKind::kParam:
      break;
    case OpKind::kAdd:
      if (needs(0)) acc_add(slot(0), g);
      if (needs(1)) acc_add(slot(1), g);
      break;
    case OpKind::kSub:
      if (needs(0)) acc_add(slot(0), g);
      if (needs(1)) acc_add(slot(1), g, -1.0);
      break;
    case OpKind::kMul: {
      if (needs(0)) {
        Tensor t = kernels::mul(g, in_val(1));
        acc_add(slot(0), t);
      }
      if (needs(1)) {
        Tensor t = kernels::mul(g, in_val(0));
        acc_add(slot(1), t);
      }
      break;
    }
    case OpKind::kScale:
      if (needs(0)) acc_add(slot(0), g, n.attrs.d0);
      break;
    case OpKind::kMatmul:
      kernels::matmul_bwd(in_val(0), in_val(1), g, needs(0) ? &slot(0) : nullptr,
                          needs(1) ? &slot(1) : nullptr);
      break;
    case OpKind::kConv2d: {
      const bool has_bias = n.inputs.size() == 3;
      kernels::conv2d_bwd(in_val(0), in_val(1), n.attrs.i0, n.attrs.i1, g,
                          needs(0) ? &slot(0) : nullptr, needs(1) ? &slot(1) : nullptr,
                          has_bias && needs(2) ? &slot(2) : nullptr);
      break;
    }
    case OpKind::kRelu:
      if (needs(0)) kernels::relu_bwd(in_val(0), g, slot(0));
      break;
    case OpKind::kSigmoid:
      if (needs(0)) kernels::sigmoid_bwd(n.out, g, slot(0));
      break;
    case OpKind::kTanh:
      if (needs(0)) kernels::tanh_bwd(n.out, g, slot(0));
      break;
    case OpKind::kSum:
      if (needs(0)) {
        Tensor& s = slot(0);
        const double gv = g.at(0);
        for (int64_t i = 0; i < s.numel(); ++i) s.set(i, s.at(i) + gv);
      }
      break;
    case OpKind::kMean:
      if (needs(0)) {
        Tensor& s = slot(0);
        const double gv = g.at(0) / static_cast<double>(s.numel());
        for (int64_t i = 0; i < s.numel(); ++i) s.set(i, s.at(i) + gv);
      }
      break;
    case OpKind::kConcat: {
      const int axis = static_cast<int>(n.attrs.i0);
      const Tensor& out = n.out;
      int64_t outer = 1, inner = 1;
      for (int d = 0; d < axis; ++d) outer *= out.dim(d);
      for (int d = axis + 1; d < out.rank(); ++d) inner *= out.dim(d);
      const int64_t total = out.dim(axis);
      int64_t offset = 0;
      for (size_t pi = 0; pi < n.inputs.size(); ++pi) {
        const int64_t ext = in_val(static_cast<int>(pi)).dim(axis);
        if (needs(static_cast<int>(pi))) {
          Tensor& s = slot(static_cast<int>(pi));
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t e = 0; e < ext; ++e)
              for (int64_t i = 0; i < inner; ++i) {
                const int64_t src = (o * total + offset + e) * inner + i;
                const int64_t dst = (o * ext + e) * inner + i;
                s.set(dst, s.at(dst) + g.at(src));
              }
        }
        offset += ext;
      }
      break;
    }
    case OpKind::kGlobalAvgPool:
      if (needs(0)) {
        Tensor& s = slot(0);
        const Tensor& x = in_val(0);
        const bool batched = x.rank() == 4;
        const int64_t nc = batched ? x.dim(0) * x.dim(1) : x.dim(0);
        const int64_t hw = x.numel() / nc;
        for (int64_t i = 0; i < nc; ++i) {
          const double gv = g.at(i) / static_cast<double>(hw);
          for (int64_t j = 0; j < hw; ++j) s.set(i * hw + j, s.at(i * hw + j) + gv);
        }
      }
      break;
    case OpKind::kReshape:
      if (needs(0)) {
        Tensor& s = slot(0);
        for (int64_t i = 0; i < s.numel(); ++i) s.set(i, s.at(i) + g.at(i));
      }
      break;
    case OpKind::kSlice:
      if (needs(0)) {
        Tensor& s = slot(0);
        const Tensor& x = in_val(0);
        const int axis = static_cast<int>(n.attrs.i0);
        const int64_t start = n.attrs.i1, len = n.attrs.i2;
        int64_t outer = 1, inner = 1;
        for (int d = 0; d < axis; ++d) outer *= x.dim(d);
        for (int d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
        const int64_t ext = x.dim(axis);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t e = 0; e < len; ++e)
            for (int64_t i = 0; i < inner; ++i) {
              const int64_t dst = (o * ext + start + e) * inner + i;
              s.set(dst, s.at(dst) + g.at((o * len + e) * inner + i));
            }
      }
      break;
    case OpKind::kLinear:
      kernels::linear_bwd(in_val(0), in_val(1), g, needs(0) ? &slot(0) : nullptr,
                          needs(1) ? &slot(1) : nullptr, needs(2) ? &slot(2) : nullptr);
      break;
    case OpKind::kPairConcat:
      kernels::pair_concat_bwd(g, in_val(0), in_val(1), needs(0) ? &slot(0) : nullptr,
                               needs(1) ? &slot(1) : nullptr);
      break;
    case OpKind::kInfoNce:
      if (needs(0)) kernels::info_nce_bwd(in_val(0), g, slot(0));
      break;
    case OpKind::kCriticScores:
      kernels::critic_scores_bwd(in_val(0), in_val(1), in_val(2), in_val(3), in_val(4), g,
                                 needs(0) ? &slot(0) : nullptr, needs(1) ? &slot(1) : nullptr,
                                 needs(2) ? &slot(2) : nullptr, needs(3) ? &slot(3) : nullptr,
                                 needs(4) ? &slot(4) : nullptr, needs(5) ? &slot(5) : nullptr);
      break;
    case OpKind::kAffineGrid:
      if (needs(0)) kernels::affine_grid_bwd(g, slot(0));
      break;
    case OpKind::kGridSample:
      kernels::grid_sample_bwd(in_val(0), in_val(1), g, needs(0) ? &slot(0) : nullptr,
                               needs(1) ? &slot(1) : nullptr);
      break;
    case OpKind::kModDeformConv:
      kernels::mod_deform_conv_bwd(in_val(0), in_val(1), in_val(2), in_val(3), g,
                                   needs(0) ? &slot(0) : nullptr, needs(1) ? &slot(1) : nullptr,
                                   needs(2) ? &slot(2) : nullptr, needs(3) ? &slot(3) : nullptr,
                                   needs(4) ? &slot(4) : nullptr);
      break;
  }
}

GradMap Graph::backward(Var loss) {
  check_var(loss);
  const Tensor& lv = value(loss);
  check(lv.numel() == 1, "backward: loss must be scalar, got shape " + shape_str(lv.shape()));
  adjoints_.assign(nodes_.size(), Tensor{});
  adjoints_[static_cast<size_t>(loss.id)] = Tensor::full(lv.shape(), dtype_, 1.0);
  for (int32_t id = loss.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!adjoints_[static_cast<size_t>(id)].defined() || !n.requires_grad) continue;
    backward_node(id);
  }
  GradMap grads;
  for (const auto& [name, id] : params_) {
    Tensor& slot = adjoints_[static_cast<size_t>(id)];
    if (slot.defined()) {
      check(slot.all_finite(), "backward: non-finite gradient for '" + name + "'");
      grads[name] = slot;
    } else {
      grads[name] = Tensor(nodes_[static_cast<size_t>(id)].out.shape(), dtype_);
    }
  }
  return grads;
}

const Tensor& Graph::adjoint(Var v) const {
  check_var(v);
  static const Tensor undefined;
  if (adjoints_.size() != nodes_.size()) return undefined;
  return adjoints_[static_cast<size_t>(v.id)];
}

}  // namespace tact
