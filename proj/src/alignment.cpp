#include "tact/alignment.hpp"

#include <algorithm>

#include "tact/warp.hpp"

namespace tact {

Var extract_features(Graph& g, const BackboneStub& backbone, Var image) {
  return backbone.forward(g, image);
}

Var estimate_affine(Graph& g, const GTMNet& gtm, Var z_t, Var z_supp) {
  return gtm.forward(g, z_t, z_supp);
}

Var global_transform(Graph& g, Var z_supp, Var theta) {
  const Tensor& f = g.value(z_supp);
  Var grid = affine_grid(g, theta, f.dim(1), f.dim(2));
  return grid_sample(g, z_supp, grid);
}

Var local_calibrate(Graph& g, const LCMNet& lcm, Var z_bar, Var z_t) {
  const LCMNet::Field field = lcm.estimate(g, z_bar, z_t);
  return lcm.calibrate(g, z_bar, field);
}

Var aggregate(Graph& g, Var z_t, const std::map<int, Var>& aligned) {
  Var acc = z_t;
  for (const auto& [delta, z] : aligned) {  // std::map iterates in delta order
    check(g.value(z).shape() == g.value(z_t).shape(),
          "aggregate: shape mismatch at delta " + std::to_string(delta) + ", " +
              shape_str(g.value(z).shape()) + " vs " + shape_str(g.value(z_t).shape()));
    acc = g.add(acc, z);
  }
  return acc;
}

FrameFeatures forward_pipeline(Graph& g, const PoseModel& model, const ClipTensors& clip,
                               const std::vector<int>& window, bool use_lcm,
                               PipelineStats* stats) {
  FrameFeatures out;
  out.z_t = extract_features(g, model.backbone, g.leaf(clip.key));
  std::vector<int> deltas = window;
  std::sort(deltas.begin(), deltas.end());
  for (int delta : deltas) {
    auto it = clip.supports.find(delta);
    check(it != clip.supports.end(),
          "forward_pipeline: clip has no frame for delta " + std::to_string(delta));
    Var z_supp = extract_features(g, model.backbone, g.leaf(it->second));
    out.z_supp[delta] = z_supp;
    Var theta = estimate_affine(g, model.gtm, out.z_t, z_supp);
    if (stats) stats->affine_estimates++;
    Var z_bar = global_transform(g, z_supp, theta);
    if (stats) stats->global_transforms++;
    out.z_bar[delta] = z_bar;
    if (use_lcm) {
      out.z_bbar[delta] = local_calibrate(g, model.lcm, z_bar, out.z_t);
      if (stats) stats->local_calibrations++;
    } else {
      out.z_bbar[delta] = z_bar;
    }
  }
  out.z_tilde = aggregate(g, out.z_t, out.z_bbar);
  return out;
}

}  // namespace tact
