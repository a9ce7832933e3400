#pragma once

#include <map>
#include <string>
#include <vector>

#include "tact/graph.hpp"
#include "tact/rng.hpp"

namespace tact {

using ParamPtrs = std::map<std::string, Tensor*>;

struct Conv2dLayer {
  std::string name;
  int stride = 1, pad = 1;
  Tensor w, b;

  void init_he(const std::string& n, int cin, int cout, int k, DType dt, Rng& rng, int stride_ = 1,
               int pad_ = 1);
  void init_zero(const std::string& n, int cin, int cout, int k, DType dt, int stride_ = 1,
                 int pad_ = 1);
  Var operator()(Graph& g, Var x) const;
  void collect(ParamPtrs& out);
};

struct DenseLayer {
  std::string name;
  Tensor w, b;  // w [Dout,Din]

  void init_he(const std::string& n, int din, int dout, DType dt, Rng& rng);
  void init_zero(const std::string& n, int din, int dout, DType dt);
  Var operator()(Graph& g, Var x) const;  // x [B,Din]
  void collect(ParamPtrs& out);
};

struct ResBlock {
  Conv2dLayer c1, c2;
  void init(const std::string& n, int ch, DType dt, Rng& rng);
  Var operator()(Graph& g, Var x) const;  // relu(x + c2(relu(c1(x))))
  void collect(ParamPtrs& out);
};

struct NetConfig {
  int in_channels = 3;
  std::vector<int> backbone_channels{16, 32, 32, 32};  // last entry is C
  std::vector<int> backbone_strides{1, 2, 2, 1};
  int gtm_hidden = 32;
  int lcm_blocks = 2;
  int calib_kernel = 3;
  int joints = 5;
  int critic_hidden = 64;

  int feature_channels() const { return backbone_channels.back(); }
  // Tiny variant for finite-difference checks of the whole pipeline.
  static NetConfig micro();
};

// Convolutional feature extractor; spatial extents shrink by 4x.
struct BackboneStub {
  std::vector<Conv2dLayer> convs;
  void init(const NetConfig& cfg, DType dt, Rng& rng);
  Var forward(Graph& g, Var image) const;  // [3,H,W] -> [C,H/4,W/4]
  void collect(ParamPtrs& out);
};

// Predicts a 2x3 affine from a channel-concatenated feature pair. The
// final layer starts at zero weight with an identity bias, so the module
// outputs the identity transform for any input before training.
struct GTMNet {
  Conv2dLayer c1, c2;
  DenseLayer fc;
  void init(const NetConfig& cfg, DType dt, Rng& rng);
  Var forward(Graph& g, Var z_t, Var z_supp) const;  // -> theta [2,3]
  void collect(ParamPtrs& out);
};

// Estimates per-pixel offsets and masks from (z_bar ++ z_t) with two
// independent branches, then refines z_bar with a modulated deformable
// convolution. Offset head starts at zero; mask head starts at
// sigmoid(0) = 0.5.
struct LCMNet {
  std::vector<ResBlock> off_blocks, mask_blocks;
  Conv2dLayer off_head, mask_head;
  Tensor calib_w, calib_b;
  int kernel = 3;

  struct Field {
    Var offsets, masks;
  };

  void init(const NetConfig& cfg, DType dt, Rng& rng);
  Field estimate(Graph& g, Var z_bar, Var z_t) const;
  Var calibrate(Graph& g, Var z_bar, const Field& f) const;
  void collect(ParamPtrs& out);
};

struct DetectionHead {
  Conv2dLayer c1, c2, c3;
  void init(const NetConfig& cfg, DType dt, Rng& rng);
  Var forward(Graph& g, Var z_tilde) const;  // [C,h,w] -> [J,h,w]
  void collect(ParamPtrs& out);
};

// Pair scorer for the contrastive MI bound: concatenated input vectors
// through two fully connected layers. The last layer starts at zero so
// an untrained critic scores every pair 0.
struct Critic {
  DenseLayer fc1, fc2;
  void init(const std::string& n, int da, int db, int hidden, DType dt, Rng& rng);
  // a [Ba,Da], b [Bb,Db] -> scores [Ba,Bb]
  Var score_matrix(Graph& g, Var a, Var b) const;
  void collect(ParamPtrs& out);
  bool initialized() const { return fc1.w.defined(); }
};

struct PoseModel {
  NetConfig cfg;
  BackboneStub backbone;
  GTMNet gtm;
  LCMNet lcm;
  DetectionHead head;

  void init(const NetConfig& c, DType dt, uint64_t seed);
  void collect(ParamPtrs& out);
};

struct Critics {
  Critic y_zt, y_zsupp, y_ztilde, zt_ztilde, zsupp_ztilde;
  void init(const NetConfig& c, DType dt, uint64_t seed);
  void collect(ParamPtrs& out);
};

}  // namespace tact
