#pragma once

#include <map>
#include <vector>

#include "tact/nets.hpp"

namespace tact {

struct ClipTensors {
  Tensor key;                      // [3,H,W]
  std::map<int, Tensor> supports;  // delta -> [3,H,W]
};

struct PipelineStats {
  int affine_estimates = 0;
  int global_transforms = 0;
  int local_calibrations = 0;
};

// Per-clip features: the key feature, and per-delta raw / coarsely
// aligned / calibrated supporting features plus the aggregated result.
struct FrameFeatures {
  Var z_t;
  std::map<int, Var> z_supp;
  std::map<int, Var> z_bar;
  std::map<int, Var> z_bbar;
  Var z_tilde;
};

Var extract_features(Graph& g, const BackboneStub& backbone, Var image);

Var estimate_affine(Graph& g, const GTMNet& gtm, Var z_t, Var z_supp);

// affine_grid + grid_sample at the feature's own resolution.
Var global_transform(Graph& g, Var z_supp, Var theta);

// Offsets and masks come from (z_bar ++ z_t); z_t never enters the
// deformable convolution itself, so with a frozen field the output is a
// function of z_bar alone.
Var local_calibrate(Graph& g, const LCMNet& lcm, Var z_bar, Var z_t);

// z_tilde = z_t + sum of aligned features; accumulation runs in
// ascending delta order regardless of map insertion order.
Var aggregate(Graph& g, Var z_t, const std::map<int, Var>& aligned);

FrameFeatures forward_pipeline(Graph& g, const PoseModel& model, const ClipTensors& clip,
                               const std::vector<int>& window, bool use_lcm = true,
                               PipelineStats* stats = nullptr);

}  // namespace tact
