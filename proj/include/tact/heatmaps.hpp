#pragma once

#include <array>
#include <vector>

#include "tact/graph.hpp"

namespace tact {

struct PoseAnnotation {
  std::vector<std::array<double, 2>> joints;  // (x, y)
  std::vector<uint8_t> visible;

  size_t size() const { return joints.size(); }
};

PoseAnnotation scale_annotation(const PoseAnnotation& ann, double sx, double sy);

struct HeatmapStack {
  Tensor maps;  // [J,h,w]
  double sigma = 0.0;
};

// Gaussian bump per visible joint, centered on the nearest lattice point
// so each visible channel peaks at exactly 1.0; invisible joints render
// all-zero. A visible joint outside the lattice is rejected.
HeatmapStack render_heatmap(const PoseAnnotation& ann, int64_t h, int64_t w, double sigma,
                            DType dt = DType::F32);

// Mean squared error over visible-joint channels only; invisible
// channels are excluded from numerator and element count.
Var heatmap_loss(Graph& g, Var pred, const Tensor& target, const std::vector<uint8_t>& visible);

Var total_loss(Graph& g, Var l_h, Var l_mi, double beta);
double total_loss(double l_h, double l_mi, double beta);

// Per-joint argmax, ties broken by the smallest row-major index. No
// sub-pixel refinement; visibility is not estimated (all marked visible).
PoseAnnotation decode_heatmap(const Tensor& maps);

struct PckSample {
  std::vector<int> correct;  // per joint: -1 not scored, 0 wrong, 1 correct
  double mean = 0.0;         // over visible joints
  int n_visible = 0;
};

// A visible joint is correct when ||pred - gt|| <= threshold_frac *
// (diagonal of the ground-truth joint bounding box).
PckSample pck(const PoseAnnotation& pred, const PoseAnnotation& gt, double threshold_frac);

}  // namespace tact
