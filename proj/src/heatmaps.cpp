#include "tact/heatmaps.hpp"

#include <algorithm>
#include <cmath>

namespace tact {

PoseAnnotation scale_annotation(const PoseAnnotation& ann, double sx, double sy) {
  PoseAnnotation out = ann;
  for (auto& j : out.joints) {
    j[0] *= sx;
    j[1] *= sy;
  }
  return out;
}

HeatmapStack render_heatmap(const PoseAnnotation& ann, int64_t h, int64_t w, double sigma,
                            DType dt) {
  check(sigma > 0.0, "render_heatmap: sigma must be > 0");
  check(ann.joints.size() == ann.visible.size(), "render_heatmap: annotation size mismatch");
  const int64_t j = static_cast<int64_t>(ann.joints.size());
  Tensor maps({j, h, w}, dt);
  for (int64_t k = 0; k < j; ++k) {
    if (!ann.visible[static_cast<size_t>(k)]) continue;  // all-zero channel
    const double cx = std::round(ann.joints[static_cast<size_t>(k)][0]);
    const double cy = std::round(ann.joints[static_cast<size_t>(k)][1]);
    check(cx >= 0 && cx <= static_cast<double>(w - 1) && cy >= 0 && cy <= static_cast<double>(h - 1),
          "render_heatmap: visible joint " + std::to_string(k) + " falls outside the lattice");
    for (int64_t v = 0; v < h; ++v)
      for (int64_t u = 0; u < w; ++u) {
        const double d2 = (u - cx) * (u - cx) + (v - cy) * (v - cy);
        maps.set((k * h + v) * w + u, std::exp(-d2 / (2.0 * sigma * sigma)));
      }
  }
  return HeatmapStack{std::move(maps), sigma};
}

Var heatmap_loss(Graph& g, Var pred, const Tensor& target, const std::vector<uint8_t>& visible) {
  const Tensor& p = g.value(pred);
  check(p.shape() == target.shape(), "heatmap_loss: shape mismatch " + shape_str(p.shape()) +
                                         " vs " + shape_str(target.shape()));
  check(p.rank() == 3, "heatmap_loss: expects [J,h,w]");
  check(static_cast<int64_t>(visible.size()) == p.dim(0), "heatmap_loss: visibility size mismatch");
  int64_t n_vis = 0;
  for (uint8_t v : visible) n_vis += v ? 1 : 0;
  check(n_vis > 0, "heatmap_loss: all joints invisible, loss undefined");

  Var acc;
  for (int64_t k = 0; k < p.dim(0); ++k) {
    if (!visible[static_cast<size_t>(k)]) continue;
    Var pj = g.slice(pred, 0, k, 1);
    Var tj = g.leaf(Tensor(target).astype(g.dtype()));
    tj = g.slice(tj, 0, k, 1);
    Var d = g.sub(pj, tj);
    Var s = g.sum(g.mul(d, d));
    acc = acc.valid() ? g.add(acc, s) : s;
  }
  const double denom = static_cast<double>(n_vis * p.dim(1) * p.dim(2));
  return g.scale(acc, 1.0 / denom);
}

Var total_loss(Graph& g, Var l_h, Var l_mi, double beta) {
  return g.add(l_h, g.scale(l_mi, beta));
}

double total_loss(double l_h, double l_mi, double beta) {
  check(std::isfinite(l_h) && std::isfinite(l_mi) && std::isfinite(beta),
        "total_loss: non-finite input");
  return l_h + beta * l_mi;
}

PoseAnnotation decode_heatmap(const Tensor& maps) {
  check(maps.rank() == 3, "decode_heatmap: expects [J,h,w]");
  const int64_t j = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
  PoseAnnotation ann;
  ann.joints.resize(static_cast<size_t>(j));
  ann.visible.assign(static_cast<size_t>(j), 1);
  for (int64_t k = 0; k < j; ++k) {
    int64_t best = 0;
    double best_v = maps.at(k * h * w);
    for (int64_t i = 1; i < h * w; ++i) {
      const double v = maps.at(k * h * w + i);
      if (v > best_v) {  // strict: ties keep the smallest row-major index
        best_v = v;
        best = i;
      }
    }
    ann.joints[static_cast<size_t>(k)] = {static_cast<double>(best % w),
                                          static_cast<double>(best / w)};
  }
  return ann;
}

PckSample pck(const PoseAnnotation& pred, const PoseAnnotation& gt, double threshold_frac) {
  check(pred.size() == gt.size(), "pck: joint count mismatch");
  check(threshold_frac > 0.0, "pck: threshold must be > 0");
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (const auto& p : gt.joints) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  const double diag = std::hypot(max_x - min_x, max_y - min_y);
  check(diag > 0.0, "pck: ground-truth bounding box has zero diagonal");
  PckSample out;
  out.correct.assign(gt.size(), -1);
  int hits = 0;
  for (size_t k = 0; k < gt.size(); ++k) {
    if (!gt.visible[k]) continue;
    const double d = std::hypot(pred.joints[k][0] - gt.joints[k][0],
                                pred.joints[k][1] - gt.joints[k][1]);
    const bool ok = d <= threshold_frac * diag;
    out.correct[k] = ok ? 1 : 0;
    out.n_visible++;
    hits += ok ? 1 : 0;
  }
  out.mean = out.n_visible > 0 ? static_cast<double>(hits) / out.n_visible : 0.0;
  return out;
}

}  // namespace tact
