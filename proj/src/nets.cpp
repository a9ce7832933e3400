#include "tact/nets.hpp"

#include <cmath>

#include "tact/warp.hpp"

namespace tact {

void Conv2dLayer::init_he(const std::string& n, int cin, int cout, int k, DType dt, Rng& rng,
                          int stride_, int pad_) {
  name = n;
  stride = stride_;
  pad = pad_;
  const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
  w = randn({cout, cin, k, k}, dt, rng, std);
  b = Tensor({cout}, dt);
}

void Conv2dLayer::init_zero(const std::string& n, int cin, int cout, int k, DType dt, int stride_,
                            int pad_) {
  name = n;
  stride = stride_;
  pad = pad_;
  w = Tensor({cout, cin, k, k}, dt);
  b = Tensor({cout}, dt);
}

Var Conv2dLayer::operator()(Graph& g, Var x) const {
  return g.conv2d(x, g.param(name + ".w", w), g.param(name + ".b", b), stride, pad);
}

void Conv2dLayer::collect(ParamPtrs& out) {
  out[name + ".w"] = &w;
  out[name + ".b"] = &b;
}

void DenseLayer::init_he(const std::string& n, int din, int dout, DType dt, Rng& rng) {
  name = n;
  const double std = std::sqrt(2.0 / static_cast<double>(din));
  w = randn({dout, din}, dt, rng, std);
  b = Tensor({dout}, dt);
}

void DenseLayer::init_zero(const std::string& n, int din, int dout, DType dt) {
  name = n;
  w = Tensor({dout, din}, dt);
  b = Tensor({dout}, dt);
}

Var DenseLayer::operator()(Graph& g, Var x) const {
  return g.linear(x, g.param(name + ".w", w), g.param(name + ".b", b));
}

void DenseLayer::collect(ParamPtrs& out) {
  out[name + ".w"] = &w;
  out[name + ".b"] = &b;
}

void ResBlock::init(const std::string& n, int ch, DType dt, Rng& rng) {
  c1.init_he(n + ".c1", ch, ch, 3, dt, rng);
  c2.init_he(n + ".c2", ch, ch, 3, dt, rng);
}

Var ResBlock::operator()(Graph& g, Var x) const {
  return g.relu(g.add(x, c2(g, g.relu(c1(g, x)))));
}

void ResBlock::collect(ParamPtrs& out) {
  c1.collect(out);
  c2.collect(out);
}

NetConfig NetConfig::micro() {
  NetConfig c;
  c.backbone_channels = {4, 4, 4, 4};
  c.gtm_hidden = 6;
  c.lcm_blocks = 1;
  c.joints = 2;
  c.critic_hidden = 6;
  return c;
}

void BackboneStub::init(const NetConfig& cfg, DType dt, Rng& rng) {
  check(cfg.backbone_channels.size() == cfg.backbone_strides.size() &&
            !cfg.backbone_channels.empty(),
        "backbone: channels/strides config mismatch");
  int64_t downsample = 1;
  for (int s : cfg.backbone_strides) downsample *= s;
  check(downsample == 4, "backbone: strides must downsample by exactly 4");
  convs.clear();
  int cin = cfg.in_channels;
  for (size_t i = 0; i < cfg.backbone_channels.size(); ++i) {
    Conv2dLayer layer;
    layer.init_he("backbone.conv" + std::to_string(i), cin, cfg.backbone_channels[i], 3, dt, rng,
                  cfg.backbone_strides[i], 1);
    cin = cfg.backbone_channels[i];
    convs.push_back(std::move(layer));
  }
}

Var BackboneStub::forward(Graph& g, Var image) const {
  const Tensor& t = g.value(image);
  check(t.rank() == 3, "backbone: image must be [3,H,W], got " + shape_str(t.shape()));
  check(t.dim(1) % 4 == 0 && t.dim(2) % 4 == 0,
        "backbone: image extents must be divisible by 4, got " + shape_str(t.shape()));
  Var x = image;
  for (const auto& layer : convs) x = g.relu(layer(g, x));
  return x;
}

void BackboneStub::collect(ParamPtrs& out) {
  for (auto& layer : convs) layer.collect(out);
}

void GTMNet::init(const NetConfig& cfg, DType dt, Rng& rng) {
  const int c2in = 2 * cfg.feature_channels();
  c1.init_he("gtm.c1", c2in, cfg.gtm_hidden, 3, dt, rng);
  c2.init_he("gtm.c2", cfg.gtm_hidden, cfg.gtm_hidden, 3, dt, rng);
  fc.init_zero("gtm.fc", cfg.gtm_hidden, 6, dt);
  // identity-transform bias: output is [[1,0,0],[0,1,0]] until trained
  fc.b.set(0, 1.0);
  fc.b.set(4, 1.0);
}

Var GTMNet::forward(Graph& g, Var z_t, Var z_supp) const {
  check(g.value(z_t).shape() == g.value(z_supp).shape(),
        "gtm: feature shapes differ, " + shape_str(g.value(z_t).shape()) + " vs " +
            shape_str(g.value(z_supp).shape()));
  Var x = g.concat_channels({z_t, z_supp});
  x = g.relu(c1(g, x));
  x = g.relu(c2(g, x));
  Var pooled = g.reshape(g.global_avg_pool(x), {1, g.value(x).dim(0)});
  return g.reshape(fc(g, pooled), {2, 3});
}

void GTMNet::collect(ParamPtrs& out) {
  c1.collect(out);
  c2.collect(out);
  fc.collect(out);
}

void LCMNet::init(const NetConfig& cfg, DType dt, Rng& rng) {
  const int c = cfg.feature_channels();
  const int branch_ch = 2 * c;
  kernel = cfg.calib_kernel;
  const int taps = kernel * kernel;
  off_blocks.clear();
  mask_blocks.clear();
  for (int i = 0; i < cfg.lcm_blocks; ++i) {
    ResBlock ob, mb;
    ob.init("lcm.off.block" + std::to_string(i), branch_ch, dt, rng);
    mb.init("lcm.mask.block" + std::to_string(i), branch_ch, dt, rng);
    off_blocks.push_back(std::move(ob));
    mask_blocks.push_back(std::move(mb));
  }
  off_head.init_zero("lcm.off.head", branch_ch, 2 * taps, 3, dt);
  mask_head.init_zero("lcm.mask.head", branch_ch, taps, 3, dt);
  const double std = std::sqrt(2.0 / (static_cast<double>(c) * taps));
  calib_w = randn({c, c, kernel, kernel}, dt, rng, std);
  calib_b = Tensor({c}, dt);
}

LCMNet::Field LCMNet::estimate(Graph& g, Var z_bar, Var z_t) const {
  check(g.value(z_bar).shape() == g.value(z_t).shape(),
        "lcm: feature shapes differ, " + shape_str(g.value(z_bar).shape()) + " vs " +
            shape_str(g.value(z_t).shape()));
  Var x = g.concat_channels({z_bar, z_t});
  Var xo = x;
  for (const auto& blk : off_blocks) xo = blk(g, xo);
  Var off = off_head(g, xo);
  Var xm = x;
  for (const auto& blk : mask_blocks) xm = blk(g, xm);
  Var mask = g.sigmoid(mask_head(g, xm));
  return Field{off, mask};
}

Var LCMNet::calibrate(Graph& g, Var z_bar, const Field& f) const {
  return modulated_deform_conv(g, z_bar, f.offsets, f.masks, g.param("lcm.calib.w", calib_w),
                               g.param("lcm.calib.b", calib_b));
}

void LCMNet::collect(ParamPtrs& out) {
  for (auto& blk : off_blocks) blk.collect(out);
  for (auto& blk : mask_blocks) blk.collect(out);
  off_head.collect(out);
  mask_head.collect(out);
  out["lcm.calib.w"] = &calib_w;
  out["lcm.calib.b"] = &calib_b;
}

void DetectionHead::init(const NetConfig& cfg, DType dt, Rng& rng) {
  const int c = cfg.feature_channels();
  c1.init_he("head.c1", c, c, 3, dt, rng);
  c2.init_he("head.c2", c, c, 3, dt, rng);
  c3.init_he("head.c3", c, cfg.joints, 3, dt, rng);
}

Var DetectionHead::forward(Graph& g, Var z_tilde) const {
  Var x = g.relu(c1(g, z_tilde));
  x = g.relu(c2(g, x));
  return c3(g, x);
}

void DetectionHead::collect(ParamPtrs& out) {
  c1.collect(out);
  c2.collect(out);
  c3.collect(out);
}

void Critic::init(const std::string& n, int da, int db, int hidden, DType dt, Rng& rng) {
  fc1.init_he(n + ".fc1", da + db, hidden, dt, rng);
  fc2.init_zero(n + ".fc2", hidden, 1, dt);
}

Var Critic::score_matrix(Graph& g, Var a, Var b) const {
  check(initialized(), "critic: missing (uninitialized) critic");
  return g.critic_scores(a, b, g.param(fc1.name + ".w", fc1.w), g.param(fc1.name + ".b", fc1.b),
                         g.param(fc2.name + ".w", fc2.w), g.param(fc2.name + ".b", fc2.b));
}

void Critic::collect(ParamPtrs& out) {
  fc1.collect(out);
  fc2.collect(out);
}

void PoseModel::init(const NetConfig& c, DType dt, uint64_t seed) {
  cfg = c;
  Rng rb = Rng(seed).child("init/backbone");
  backbone.init(cfg, dt, rb);
  Rng rg = Rng(seed).child("init/gtm");
  gtm.init(cfg, dt, rg);
  Rng rl = Rng(seed).child("init/lcm");
  lcm.init(cfg, dt, rl);
  Rng rh = Rng(seed).child("init/head");
  head.init(cfg, dt, rh);
}

void PoseModel::collect(ParamPtrs& out) {
  backbone.collect(out);
  gtm.collect(out);
  lcm.collect(out);
  head.collect(out);
}

void Critics::init(const NetConfig& c, DType dt, uint64_t seed) {
  const int d = c.feature_channels();
  Rng rng = Rng(seed).child("init/critics");
  y_zt.init("critic.y_zt", d, d, c.critic_hidden, dt, rng);
  y_zsupp.init("critic.y_zsupp", d, d, c.critic_hidden, dt, rng);
  y_ztilde.init("critic.y_ztilde", d, d, c.critic_hidden, dt, rng);
  zt_ztilde.init("critic.zt_ztilde", d, d, c.critic_hidden, dt, rng);
  zsupp_ztilde.init("critic.zsupp_ztilde", d, d, c.critic_hidden, dt, rng);
}

void Critics::collect(ParamPtrs& out) {
  y_zt.collect(out);
  y_zsupp.collect(out);
  y_ztilde.collect(out);
  zt_ztilde.collect(out);
  zsupp_ztilde.collect(out);
}

}  // namespace tact
