#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tact/heatmaps.hpp"
#include "tact/rng.hpp"

namespace tact::synth {

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
  bool contains(double px, double py) const {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
};

struct ClipConfig {
  int height = 64, width = 48;
  int joints = 5;
  std::vector<int> window{-2, -1, 1, 2};
  double jitter_std = 1.0;
  int blur_kernel = 5;   // 1 = no blur
  bool occlude = true;   // paste a background-textured patch over one key-frame joint
  int occluder_size = 12;
  double figure_scale = 1.5;  // limb length / capsule width multiplier
  // per-frame-gap motion magnitudes
  double max_translate = 8.0;
  double max_rotate_deg = 15.0;
  double min_scale = 0.9, max_scale = 1.1;
};

// 2x3 pixel-space affine, x' = a x + b y + tx, y' = c x + d y + ty.
struct PixelAffine {
  double a = 1, b = 0, tx = 0;
  double c = 0, d = 1, ty = 0;
  std::array<double, 2> apply(double x, double y) const {
    return {a * x + b * y + tx, c * x + d * y + ty};
  }
  PixelAffine inverse() const;
  // (f * g)(p) = f(g(p))
  static PixelAffine compose(const PixelAffine& f, const PixelAffine& g);
};

// Conversions between the pixel-space affine and the normalized [2,3]
// theta used by the warp kernels (pixel-center convention).
Tensor to_normalized_theta(const PixelAffine& m, int width, int height);
std::array<double, 2> apply_theta_pixel(const Tensor& theta, double x, double y, int width,
                                        int height);

struct MotionSpec {
  std::map<int, Tensor> global_affine;  // delta -> normalized theta [2,3] (f64)
  double jitter_std = 0.0;
  int blur_kernel = 1;
  std::optional<Rect> occluder;
};

struct Clip {
  Tensor key;  // [3,H,W] f32, degraded per spec
  std::map<int, Tensor> supports;
  PoseAnnotation key_ann;  // pixel coordinates in the image frame
  std::map<int, PoseAnnotation> support_anns;
  MotionSpec spec;
  uint64_t seed = 0;
};

Clip gen_clip(const ClipConfig& cfg, uint64_t seed);

// Horizontal box blur of odd width, then the occluder rectangle filled
// with the supplied background plate. Order fixed: blur before occlusion.
Tensor degrade(const Tensor& image, int blur_kernel, const std::optional<Rect>& occluder,
               const Tensor& background);

struct Dataset {
  ClipConfig config;
  std::vector<Clip> clips;
  std::vector<int> train_idx, val_idx;
};

// Per-clip seeds are seed + index; the last 20% of clips form the
// validation split.
Dataset gen_dataset(const ClipConfig& cfg, int n_clips, uint64_t seed);

// One directory per clip: PPM (P6) images plus a JSON annotation file
// with joints, visibility, motion parameters and the clip seed.
void export_dataset(const Dataset& ds, const std::string& dir);

}  // namespace tact::synth
