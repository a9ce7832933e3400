#include "tact/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace tact::synth {

PixelAffine PixelAffine::inverse() const {
  const double det = a * d - b * c;
  check(std::abs(det) > 1e-12, "PixelAffine: singular matrix");
  PixelAffine inv;
  inv.a = d / det;
  inv.b = -b / det;
  inv.c = -c / det;
  inv.d = a / det;
  inv.tx = -(inv.a * tx + inv.b * ty);
  inv.ty = -(inv.c * tx + inv.d * ty);
  return inv;
}

PixelAffine PixelAffine::compose(const PixelAffine& f, const PixelAffine& g) {
  PixelAffine out;
  out.a = f.a * g.a + f.b * g.c;
  out.b = f.a * g.b + f.b * g.d;
  out.c = f.c * g.a + f.d * g.c;
  out.d = f.c * g.b + f.d * g.d;
  out.tx = f.a * g.tx + f.b * g.ty + f.tx;
  out.ty = f.c * g.tx + f.d * g.ty + f.ty;
  return out;
}

// x_norm = (2x + 1)/W - 1  <=>  x = ((x_norm + 1) W - 1)/2
// theta = N o M o N^-1 with N the pixel->normalized map; built from the
// images of three canonical points rather than an expanded closed form.
Tensor to_normalized_theta(const PixelAffine& m, int width, int height) {
  Tensor t({2, 3}, DType::F64);
  auto norm_x = [&](double x) { return (2.0 * x + 1.0) / width - 1.0; };
  auto norm_y = [&](double y) { return (2.0 * y + 1.0) / height - 1.0; };
  auto denorm_x = [&](double nx) { return ((nx + 1.0) * width - 1.0) / 2.0; };
  auto denorm_y = [&](double ny) { return ((ny + 1.0) * height - 1.0) / 2.0; };
  // Map the three canonical normalized points (0,0), (1,0), (0,1).
  auto image_of = [&](double nx, double ny) {
    const auto p = m.apply(denorm_x(nx), denorm_y(ny));
    return std::array<double, 2>{norm_x(p[0]), norm_y(p[1])};
  };
  const auto o = image_of(0, 0);
  const auto ex = image_of(1, 0);
  const auto ey = image_of(0, 1);
  t.set(0, ex[0] - o[0]);
  t.set(1, ey[0] - o[0]);
  t.set(2, o[0]);
  t.set(3, ex[1] - o[1]);
  t.set(4, ey[1] - o[1]);
  t.set(5, o[1]);
  return t;
}

std::array<double, 2> apply_theta_pixel(const Tensor& theta, double x, double y, int width,
                                        int height) {
  const double nx = (2.0 * x + 1.0) / width - 1.0;
  const double ny = (2.0 * y + 1.0) / height - 1.0;
  const double mx = theta.at(0) * nx + theta.at(1) * ny + theta.at(2);
  const double my = theta.at(3) * nx + theta.at(4) * ny + theta.at(5);
  return {((mx + 1.0) * width - 1.0) / 2.0, ((my + 1.0) * height - 1.0) / 2.0};
}

namespace {

constexpr int kBgWaves = 3;

struct BgParams {
  // per channel: sum of sinusoids over the plane
  double amp[3][kBgWaves], fx[3][kBgWaves], fy[3][kBgWaves], ph[3][kBgWaves];
  double base[3];

  static BgParams draw(Rng& rng) {
    BgParams p;
    for (int c = 0; c < 3; ++c) {
      p.base[c] = rng.uniform(0.30, 0.45);
      for (int k = 0; k < kBgWaves; ++k) {
        // wavelengths >= ~30 px keep the texture smooth enough that
        // strided feature extraction stays nearly shift-equivariant
        p.amp[c][k] = rng.uniform(0.06, 0.14);
        p.fx[c][k] = rng.uniform(0.04, 0.20);
        p.fy[c][k] = rng.uniform(0.04, 0.20);
        p.ph[c][k] = rng.uniform(0.0, 2.0 * M_PI);
      }
    }
    return p;
  }

  double eval(int c, double x, double y) const {
    double v = base[c];
    for (int k = 0; k < kBgWaves; ++k) v += amp[c][k] * std::sin(fx[c][k] * x + fy[c][k] * y + ph[c][k]);
    return std::clamp(v, 0.05, 0.8);
  }
};

struct Palette {
  std::vector<std::array<double, 3>> colors;
  static Palette make(int j) {
    Palette p;
    for (int k = 0; k < j; ++k) {
      const double hue = 6.0 * k / j;
      const int sector = static_cast<int>(hue) % 6;
      const double f = hue - std::floor(hue);
      const double v = 0.95, s = 0.85;
      const double q = v * (1 - s * f), t = v * (1 - s * (1 - f)), lo = v * (1 - s);
      switch (sector) {
        case 0: p.colors.push_back({v, t, lo}); break;
        case 1: p.colors.push_back({q, v, lo}); break;
        case 2: p.colors.push_back({lo, v, t}); break;
        case 3: p.colors.push_back({lo, q, v}); break;
        case 4: p.colors.push_back({t, lo, v}); break;
        default: p.colors.push_back({v, lo, q}); break;
      }
    }
    return p;
  }
};

int parent_of(int j) { return (j - 1) / 2; }

double dist_to_segment(double px, double py, double x0, double y0, double x1, double y1) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (x0 + t * dx), py - (y0 + t * dy));
}

// Render background + capsule skeleton into [3,H,W].
Tensor render_frame(const ClipConfig& cfg, const BgParams& bg, const PixelAffine& bg_warp_inv,
                    const std::vector<std::array<double, 2>>& joints, const Palette& pal) {
  const int h = cfg.height, w = cfg.width;
  Tensor img({3, h, w}, DType::F32);
  // soft 2.5 px edge ramps; hard edges alias badly through the strided
  // feature extractor
  const double limb_r = 1.8 * cfg.figure_scale, dot_r = 2.6 * cfg.figure_scale, ramp = 4.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto src = bg_warp_inv.apply(x, y);
      double rgb[3];
      for (int c = 0; c < 3; ++c) rgb[c] = bg.eval(c, src[0], src[1]);
      // limbs, then joint dots on top
      for (size_t j = 1; j < joints.size(); ++j) {
        const auto& a = joints[j];
        const auto& b = joints[static_cast<size_t>(parent_of(static_cast<int>(j)))];
        const double d = dist_to_segment(x, y, a[0], a[1], b[0], b[1]);
        const double alpha = std::clamp((limb_r + ramp / 2 - d) / ramp, 0.0, 1.0);
        if (alpha <= 0) continue;
        for (int c = 0; c < 3; ++c)
          rgb[c] = (1 - alpha) * rgb[c] + alpha * pal.colors[j][c];
      }
      for (size_t j = 0; j < joints.size(); ++j) {
        const double d = std::hypot(x - joints[j][0], y - joints[j][1]);
        const double alpha = std::clamp((dot_r + ramp / 2 - d) / ramp, 0.0, 1.0);
        if (alpha <= 0) continue;
        for (int c = 0; c < 3; ++c)
          rgb[c] = (1 - alpha) * rgb[c] + alpha * pal.colors[j][c];
      }
      for (int c = 0; c < 3; ++c) img.set((c * h + y) * w + x, rgb[c]);
    }
  return img;
}

Tensor render_background(const ClipConfig& cfg, const BgParams& bg) {
  const int h = cfg.height, w = cfg.width;
  Tensor img({3, h, w}, DType::F32);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.set((c * h + y) * w + x, bg.eval(c, x, y));
  return img;
}

bool inside_frame(const ClipConfig& cfg, double x, double y) {
  return x >= 0 && x <= cfg.width - 1 && y >= 0 && y <= cfg.height - 1;
}

void validate(const ClipConfig& cfg) {
  check(cfg.height % 4 == 0 && cfg.width % 4 == 0,
        "gen_clip: extents must be divisible by 4");
  check(cfg.joints >= 2, "gen_clip: need at least 2 joints");
  check(cfg.blur_kernel >= 1 && cfg.blur_kernel % 2 == 1,
        "gen_clip: blur kernel must be odd and >= 1");
  check(cfg.min_scale > 0 && cfg.min_scale <= cfg.max_scale, "gen_clip: bad scale range");
  if (cfg.occlude)
    check(cfg.occluder_size >= 1 && cfg.occluder_size < std::min(cfg.width, cfg.height),
          "gen_clip: bad occluder size");
}

}  // namespace

Tensor degrade(const Tensor& image, int blur_kernel, const std::optional<Rect>& occluder,
               const Tensor& background) {
  check(image.rank() == 3 && image.dim(0) == 3, "degrade: expects [3,H,W]");
  check(blur_kernel >= 1 && blur_kernel % 2 == 1, "degrade: blur kernel must be odd and >= 1");
  const int64_t h = image.dim(1), w = image.dim(2);
  Tensor out = image;
  if (blur_kernel > 1) {
    out = Tensor({3, h, w}, image.dtype());
    const int64_t r = (blur_kernel - 1) / 2;
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          double acc = 0.0;  // zero beyond the borders
          for (int64_t d = -r; d <= r; ++d) {
            const int64_t xs = x + d;
            if (xs >= 0 && xs < w) acc += image.at((c * h + y) * w + xs);
          }
          out.set((c * h + y) * w + x, acc / blur_kernel);
        }
  }
  if (occluder) {
    check(occluder->x >= 0 && occluder->y >= 0 && occluder->x + occluder->w <= w &&
              occluder->y + occluder->h <= h,
          "degrade: occluder outside image bounds");
    check(background.shape() == image.shape(), "degrade: background plate shape mismatch");
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = occluder->y; y < occluder->y + occluder->h; ++y)
        for (int64_t x = occluder->x; x < occluder->x + occluder->w; ++x)
          out.set((c * h + y) * w + x, background.at((c * h + y) * w + x));
  }
  return out;
}

Clip gen_clip(const ClipConfig& cfg, uint64_t seed) {
  validate(cfg);
  Rng root(seed);
  const Palette pal = Palette::make(cfg.joints);

  Rng bg_rng = root.child("bg");
  const BgParams bg = BgParams::draw(bg_rng);

  // key pose: root near the center, children hang off their parents
  Rng pose_rng = root.child("pose");
  std::vector<std::array<double, 2>> key_joints(static_cast<size_t>(cfg.joints));
  key_joints[0] = {cfg.width / 2.0 + pose_rng.uniform(-4, 4),
                   cfg.height / 2.0 + pose_rng.uniform(-4, 4)};
  for (int j = 1; j < cfg.joints; ++j) {
    const auto& par = key_joints[static_cast<size_t>(parent_of(j))];
    const double len = cfg.figure_scale * pose_rng.uniform(8, 15);
    const double ang = pose_rng.uniform(0, 2 * M_PI);
    double x = par[0] + len * std::cos(ang);
    double y = par[1] + len * std::sin(ang);
    x = std::clamp(x, 3.0, cfg.width - 4.0);
    y = std::clamp(y, 3.0, cfg.height - 4.0);
    key_joints[static_cast<size_t>(j)] = {x, y};
  }

  // one per-frame-gap motion, powers of it per delta
  Rng motion_rng = root.child("motion");
  const double ang = motion_rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg) * M_PI / 180.0;
  const double sc = motion_rng.uniform(cfg.min_scale, cfg.max_scale);
  const double tx = motion_rng.uniform(-cfg.max_translate, cfg.max_translate);
  const double ty = motion_rng.uniform(-cfg.max_translate, cfg.max_translate);
  const double cx = (cfg.width - 1) / 2.0, cy = (cfg.height - 1) / 2.0;
  PixelAffine step;
  step.a = sc * std::cos(ang);
  step.b = -sc * std::sin(ang);
  step.c = sc * std::sin(ang);
  step.d = sc * std::cos(ang);
  step.tx = cx - (step.a * cx + step.b * cy) + tx;
  step.ty = cy - (step.c * cx + step.d * cy) + ty;
  const PixelAffine step_inv = step.inverse();

  Clip clip;
  clip.seed = seed;
  clip.spec.jitter_std = cfg.jitter_std;
  clip.spec.blur_kernel = cfg.blur_kernel;

  clip.key_ann.joints = key_joints;
  clip.key_ann.visible.assign(static_cast<size_t>(cfg.joints), 1);
  for (int j = 0; j < cfg.joints; ++j)
    clip.key_ann.visible[static_cast<size_t>(j)] =
        inside_frame(cfg, key_joints[static_cast<size_t>(j)][0],
                     key_joints[static_cast<size_t>(j)][1])
            ? 1
            : 0;

  std::vector<int> deltas = cfg.window;
  std::sort(deltas.begin(), deltas.end());
  for (int delta : deltas) {
    check(delta != 0, "gen_clip: window must not contain 0");
    PixelAffine g;  // identity
    for (int i = 0; i < std::abs(delta); ++i)
      g = PixelAffine::compose(delta > 0 ? step : step_inv, g);
    Tensor theta = to_normalized_theta(g, cfg.width, cfg.height);

    Rng jit = root.child("jitter/" + std::to_string(delta));
    std::vector<std::array<double, 2>> joints(static_cast<size_t>(cfg.joints));
    PoseAnnotation ann;
    ann.visible.assign(static_cast<size_t>(cfg.joints), 1);
    for (int j = 0; j < cfg.joints; ++j) {
      // joints move through the stored normalized theta so the recorded
      // motion reproduces them bit-exactly
      auto p = apply_theta_pixel(theta, key_joints[static_cast<size_t>(j)][0],
                                 key_joints[static_cast<size_t>(j)][1], cfg.width, cfg.height);
      if (cfg.jitter_std > 0) {
        p[0] += cfg.jitter_std * jit.normal();
        p[1] += cfg.jitter_std * jit.normal();
      }
      joints[static_cast<size_t>(j)] = p;
      ann.visible[static_cast<size_t>(j)] = inside_frame(cfg, p[0], p[1]) ? 1 : 0;
    }
    ann.joints = joints;
    clip.support_anns[delta] = std::move(ann);
    clip.supports[delta] = render_frame(cfg, bg, g.inverse(), joints, pal);
    clip.spec.global_affine[delta] = std::move(theta);
  }

  // clean key frame, then degradations
  Tensor key_clean = render_frame(cfg, bg, PixelAffine{}, key_joints, pal);
  Tensor bg_plate = render_background(cfg, bg);
  if (cfg.occlude) {
    Rng occ = root.child("occluder");
    std::vector<int> candidates;
    for (int j = 0; j < cfg.joints; ++j)
      if (clip.key_ann.visible[static_cast<size_t>(j)]) candidates.push_back(j);
    if (!candidates.empty()) {
      const int target = candidates[static_cast<size_t>(occ.below(
          static_cast<int64_t>(candidates.size())))];
      const auto& p = key_joints[static_cast<size_t>(target)];
      Rect r;
      r.w = cfg.occluder_size;
      r.h = cfg.occluder_size;
      r.x = std::clamp(static_cast<int>(std::lround(p[0])) - r.w / 2, 0, cfg.width - r.w);
      r.y = std::clamp(static_cast<int>(std::lround(p[1])) - r.h / 2, 0, cfg.height - r.h);
      clip.spec.occluder = r;
    }
  }
  clip.key = degrade(key_clean, cfg.blur_kernel, clip.spec.occluder, bg_plate);
  if (clip.spec.occluder) {
    for (int j = 0; j < cfg.joints; ++j) {
      const auto& p = key_joints[static_cast<size_t>(j)];
      if (clip.spec.occluder->contains(p[0], p[1]))
        clip.key_ann.visible[static_cast<size_t>(j)] = 0;
    }
  }
  return clip;
}

Dataset gen_dataset(const ClipConfig& cfg, int n_clips, uint64_t seed) {
  check(n_clips >= 1, "gen_dataset: n_clips must be >= 1");
  Dataset ds;
  ds.config = cfg;
  ds.clips.reserve(static_cast<size_t>(n_clips));
  for (int i = 0; i < n_clips; ++i) ds.clips.push_back(gen_clip(cfg, seed + static_cast<uint64_t>(i)));
  const int n_val = n_clips / 5;
  for (int i = 0; i < n_clips - n_val; ++i) ds.train_idx.push_back(i);
  for (int i = n_clips - n_val; i < n_clips; ++i) ds.val_idx.push_back(i);
  return ds;
}

namespace {

void write_ppm(const std::string& path, const Tensor& img) {
  const int64_t h = img.dim(1), w = img.dim(2);
  std::ofstream f(path, std::ios::binary);
  check(f.is_open(), "cannot open " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at((c * h + y) * w + x), 0.0, 1.0);
        f.put(static_cast<char>(std::lround(v * 255.0)));
      }
}

nlohmann::json ann_to_json(const PoseAnnotation& ann) {
  nlohmann::json j;
  for (size_t k = 0; k < ann.size(); ++k)
    j.push_back({{"x", ann.joints[k][0]}, {"y", ann.joints[k][1]},
                 {"visible", static_cast<bool>(ann.visible[k])}});
  return j;
}

}  // namespace

void export_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (size_t i = 0; i < ds.clips.size(); ++i) {
    const Clip& clip = ds.clips[i];
    const std::string cdir = dir + "/clip" + std::to_string(i);
    fs::create_directories(cdir);
    write_ppm(cdir + "/key.ppm", clip.key);
    nlohmann::json j;
    j["seed"] = clip.seed;
    j["key"] = ann_to_json(clip.key_ann);
    j["blur_kernel"] = clip.spec.blur_kernel;
    j["jitter_std"] = clip.spec.jitter_std;
    if (clip.spec.occluder)
      j["occluder"] = {{"x", clip.spec.occluder->x},
                       {"y", clip.spec.occluder->y},
                       {"w", clip.spec.occluder->w},
                       {"h", clip.spec.occluder->h}};
    for (const auto& [delta, img] : clip.supports) {
      const std::string tag = "support" + std::to_string(delta);
      write_ppm(cdir + "/" + tag + ".ppm", img);
      j["supports"][tag] = ann_to_json(clip.support_anns.at(delta));
      const Tensor& th = clip.spec.global_affine.at(delta);
      std::vector<double> tv;
      for (int64_t t = 0; t < 6; ++t) tv.push_back(th.at(t));
      j["motion"][tag] = tv;
    }
    std::ofstream f(cdir + "/annotation.json");
    check(f.is_open(), "cannot open annotation file in " + cdir);
    f << j.dump(2) << "\n";
  }
}

}  // namespace tact::synth
