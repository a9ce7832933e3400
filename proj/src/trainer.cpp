#include "tact/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "tact/checkpoint.hpp"
#include "tact/mi.hpp"

namespace fs = std::filesystem;

namespace tact::trainer {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kGtm: return "gtm";
    case Variant::kGtmLcm: return "gtm+lcm";
    case Variant::kFull: return "full";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "baseline") return Variant::kBaseline;
  if (s == "gtm") return Variant::kGtm;
  if (s == "gtm+lcm") return Variant::kGtmLcm;
  if (s == "full") return Variant::kFull;
  fail("unknown variant '" + s + "' (expected baseline|gtm|gtm+lcm|full)");
}

std::vector<int> TrainConfig::effective_window() const {
  if (variant == Variant::kBaseline) return {};
  std::vector<int> w = window;
  std::sort(w.begin(), w.end());
  return w;
}

double TrainConfig::effective_beta() const { return variant == Variant::kFull ? beta : 0.0; }
bool TrainConfig::use_lcm() const {
  return variant == Variant::kGtmLcm || variant == Variant::kFull;
}
bool TrainConfig::use_mi() const { return variant == Variant::kFull && !window.empty(); }

namespace {

nlohmann::json synth_to_json(const synth::ClipConfig& c) {
  return {{"height", c.height},       {"width", c.width},
          {"joints", c.joints},       {"jitter_std", c.jitter_std},
          {"blur_kernel", c.blur_kernel}, {"occlude", c.occlude},
          {"occluder_size", c.occluder_size}, {"figure_scale", c.figure_scale},
          {"max_translate", c.max_translate},
          {"max_rotate_deg", c.max_rotate_deg}, {"min_scale", c.min_scale},
          {"max_scale", c.max_scale}};
}

synth::ClipConfig synth_from_json(const nlohmann::json& j, synth::ClipConfig c) {
  if (j.contains("height")) c.height = j["height"];
  if (j.contains("width")) c.width = j["width"];
  if (j.contains("joints")) c.joints = j["joints"];
  if (j.contains("jitter_std")) c.jitter_std = j["jitter_std"];
  if (j.contains("blur_kernel")) c.blur_kernel = j["blur_kernel"];
  if (j.contains("occlude")) c.occlude = j["occlude"];
  if (j.contains("occluder_size")) c.occluder_size = j["occluder_size"];
  if (j.contains("figure_scale")) c.figure_scale = j["figure_scale"];
  if (j.contains("max_translate")) c.max_translate = j["max_translate"];
  if (j.contains("max_rotate_deg")) c.max_rotate_deg = j["max_rotate_deg"];
  if (j.contains("min_scale")) c.min_scale = j["min_scale"];
  if (j.contains("max_scale")) c.max_scale = j["max_scale"];
  return c;
}

nlohmann::json net_to_json(const NetConfig& c) {
  return {{"backbone_channels", c.backbone_channels},
          {"backbone_strides", c.backbone_strides},
          {"gtm_hidden", c.gtm_hidden},
          {"lcm_blocks", c.lcm_blocks},
          {"calib_kernel", c.calib_kernel},
          {"critic_hidden", c.critic_hidden}};
}

NetConfig net_from_json(const nlohmann::json& j, NetConfig c) {
  if (j.contains("backbone_channels"))
    c.backbone_channels = j["backbone_channels"].get<std::vector<int>>();
  if (j.contains("backbone_strides"))
    c.backbone_strides = j["backbone_strides"].get<std::vector<int>>();
  if (j.contains("gtm_hidden")) c.gtm_hidden = j["gtm_hidden"];
  if (j.contains("lcm_blocks")) c.lcm_blocks = j["lcm_blocks"];
  if (j.contains("calib_kernel")) c.calib_kernel = j["calib_kernel"];
  if (j.contains("critic_hidden")) c.critic_hidden = j["critic_hidden"];
  return c;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["window"] = window;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["variant"] = variant_name(variant);
  j["lr"] = lr;
  j["critic_lr"] = critic_lr;
  j["epochs"] = epochs;
  j["batch"] = batch;
  j["seed"] = seed;
  j["clips"] = clips;
  j["sigma"] = sigma;
  j["synth"] = synth_to_json(synth);
  j["net"] = net_to_json(net);
  j["out"] = out_dir;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("window")) c.window = j["window"].get<std::vector<int>>();
  if (j.contains("alpha")) c.alpha = j["alpha"];
  if (j.contains("beta")) c.beta = j["beta"];
  if (j.contains("variant")) c.variant = variant_from_string(j["variant"]);
  if (j.contains("lr")) c.lr = j["lr"];
  if (j.contains("critic_lr")) c.critic_lr = j["critic_lr"];
  if (j.contains("epochs")) c.epochs = j["epochs"];
  if (j.contains("batch")) c.batch = j["batch"];
  if (j.contains("seed")) c.seed = j["seed"];
  if (j.contains("clips")) c.clips = j["clips"];
  if (j.contains("sigma")) c.sigma = j["sigma"];
  if (j.contains("synth")) c.synth = synth_from_json(j["synth"], c.synth);
  if (j.contains("net")) c.net = net_from_json(j["net"], c.net);
  if (j.contains("out")) c.out_dir = j["out"];
  return c;
}

std::string TrainConfig::config_hash() const {
  // structural fields only: model + data shape, not optimizer or paths
  nlohmann::json j;
  std::vector<int> w = effective_window();
  j["window"] = w;
  j["variant"] = variant_name(variant);
  j["sigma"] = sigma;
  j["clips"] = clips;
  j["synth"] = synth_to_json(synth);
  j["net"] = net_to_json(net);
  return content_hash(j.dump());
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& st, double lr, double beta1,
               double beta2, double eps) {
  check(param.shape() == grad.shape(), "adam_step: param/grad shape mismatch " +
                                           shape_str(param.shape()) + " vs " +
                                           shape_str(grad.shape()));
  if (!st.m.defined()) {
    st.m = Tensor(param.shape(), param.dtype());
    st.v = Tensor(param.shape(), param.dtype());
  }
  check(st.m.shape() == param.shape(), "adam_step: state shape mismatch");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (int64_t i = 0; i < param.numel(); ++i) {
    const double g = grad.at(i);
    const double m = beta1 * st.m.at(i) + (1.0 - beta1) * g;
    const double v = beta2 * st.v.at(i) + (1.0 - beta2) * g * g;
    st.m.set(i, m);
    st.v.set(i, v);
    const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
    param.set(i, param.at(i) - update);
  }
}

void Adam::step(ParamPtrs& params, const GradMap& grads) {
  for (auto& [name, tensor] : params) {
    auto it = grads.find(name);
    check(it != grads.end(), "Adam: missing gradient for '" + name + "'");
    adam_step(*tensor, it->second, states_[name], lr_);
  }
}

namespace {

// Everything precomputed once per clip for the training loop.
struct ClipData {
  ClipTensors imgs;
  Tensor target;  // [J,h',w'] f32
  std::vector<uint8_t> visible;
  PoseAnnotation gt_hm;  // heatmap-lattice coordinates
  Tensor y_emb;          // [C] f32
  uint64_t seed = 0;
};

PoseAnnotation to_heatmap_coords(const PoseAnnotation& ann, int64_t hm_h, int64_t hm_w,
                                 double scale) {
  PoseAnnotation out = ann;
  for (auto& p : out.joints) {
    p[0] = std::clamp(p[0] * scale, 0.0, static_cast<double>(hm_w - 1));
    p[1] = std::clamp(p[1] * scale, 0.0, static_cast<double>(hm_h - 1));
  }
  return out;
}

std::vector<ClipData> prepare_clips(const synth::Dataset& ds, const TrainConfig& cfg) {
  const int64_t hm_h = cfg.synth.height / 4, hm_w = cfg.synth.width / 4;
  std::vector<ClipData> out;
  out.reserve(ds.clips.size());
  for (const auto& clip : ds.clips) {
    ClipData cd;
    cd.imgs.key = clip.key;
    cd.imgs.supports = clip.supports;
    cd.seed = clip.seed;
    cd.gt_hm = to_heatmap_coords(clip.key_ann, hm_h, hm_w, 0.25);
    cd.visible = clip.key_ann.visible;
    cd.target = render_heatmap(cd.gt_hm, hm_h, hm_w, cfg.sigma, DType::F32).maps;
    cd.y_emb = mi::embed_label(cd.target, cfg.net.feature_channels());
    out.push_back(std::move(cd));
  }
  return out;
}

struct ClipForward {
  Var pred;
  FrameFeatures feats;
};

ClipForward clip_forward(Graph& g, const PoseModel& model, const ClipData& cd,
                         const std::vector<int>& window, bool use_lcm, PipelineStats* stats) {
  ClipForward out;
  out.feats = forward_pipeline(g, model, cd.imgs, window, use_lcm, stats);
  out.pred = model.head.forward(g, out.feats.z_tilde);
  return out;
}

double validate_pck(const PoseModel& model, const std::vector<ClipData>& clips,
                    const std::vector<int>& idx, const std::vector<int>& window, bool use_lcm,
                    double threshold) {
  double acc = 0.0;
  int n = 0;
  for (int i : idx) {
    Graph g(DType::F32);
    ClipForward f = clip_forward(g, model, clips[static_cast<size_t>(i)], window, use_lcm, nullptr);
    const PoseAnnotation dec = decode_heatmap(g.value(f.pred));
    const PckSample s = pck(dec, clips[static_cast<size_t>(i)].gt_hm, threshold);
    if (s.n_visible == 0) continue;
    acc += s.mean;
    n++;
  }
  return n > 0 ? acc / n : 0.0;
}

Checkpoint make_checkpoint(const TrainConfig& cfg, ParamPtrs& model_params,
                           ParamPtrs* critic_params) {
  Checkpoint ck;
  ck.config_hash = cfg.config_hash();
  ck.seed = cfg.seed;
  for (const auto& [name, t] : model_params) ck.tensors[name] = *t;
  if (critic_params)
    for (const auto& [name, t] : *critic_params) ck.tensors[name] = *t;
  return ck;
}

constexpr const char* kCsvHeader =
    "step,epoch,l_h,i_y_zt,i_y_zsupp,i_y_ztilde,i_zt_ztilde,i_zsupp_ztilde,l_mi,l_total,val_pck,"
    "secs";

}  // namespace

TrainResult train(const TrainConfig& cfg) {
  TrainResult result;
  check(cfg.epochs >= 1 && cfg.batch >= 1 && cfg.clips >= 2, "train: bad schedule config");
  check(cfg.synth.joints >= 2, "train: need at least 2 joints");

  fs::create_directories(cfg.out_dir);
  {
    nlohmann::json j = cfg.to_json();
    j["config_hash"] = cfg.config_hash();
    std::ofstream f(cfg.out_dir + "/resolved_config.json");
    check(f.is_open(), "train: cannot write resolved config");
    f << j.dump(2) << "\n";
  }

  synth::ClipConfig synth_cfg = cfg.synth;
  synth_cfg.window = cfg.effective_window();
  const synth::Dataset ds = synth::gen_dataset(synth_cfg, cfg.clips, Rng::mix(cfg.seed, "data"));

  NetConfig net = cfg.net;
  net.joints = cfg.synth.joints;
  PoseModel model;
  model.init(net, DType::F32, cfg.seed);
  ParamPtrs model_params;
  model.collect(model_params);

  Critics critics;
  ParamPtrs critic_params;
  const bool mi_on = cfg.use_mi();
  if (mi_on) {
    critics.init(net, DType::F32, cfg.seed);
    critics.collect(critic_params);
  }

  const std::vector<ClipData> clips = prepare_clips(ds, cfg);
  const std::vector<int> window = cfg.effective_window();
  const double beta = cfg.effective_beta();

  Adam model_opt(cfg.lr);
  Adam critic_opt(cfg.critic_lr);

  const std::string metrics_path = cfg.out_dir + "/metrics.csv";
  std::ofstream csv(metrics_path);
  check(csv.is_open(), "train: cannot write metrics csv");
  csv << kCsvHeader << "\n";
  result.metrics_path = metrics_path;

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const std::string best_path = cfg.out_dir + "/best.ckpt";
  result.checkpoint_path = best_path;
  double best = -1.0;
  int step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = ds.train_idx;
    Rng shuffle_rng = Rng(cfg.seed).child("shuffle/" + std::to_string(epoch));
    shuffle_rng.shuffle(order);

    std::vector<std::vector<int>> batches;
    for (size_t i = 0; i + static_cast<size_t>(cfg.batch) <= order.size();
         i += static_cast<size_t>(cfg.batch))
      batches.emplace_back(order.begin() + static_cast<long>(i),
                           order.begin() + static_cast<long>(i + cfg.batch));
    if (batches.empty()) batches.push_back(order);  // tiny datasets: one batch of everything

    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const std::vector<int>& batch = batches[bi];
      try {
        Graph g(DType::F32);
        Var lh_acc;
        std::vector<Var> y_rows, zt_rows, ztilde_rows;
        std::map<int, std::vector<Var>> zsupp_rows;
        const int64_t c_feat = net.feature_channels();

        for (int idx : batch) {
          const ClipData& cd = clips[static_cast<size_t>(idx)];
          ClipForward f = clip_forward(g, model, cd, window, cfg.use_lcm(), &result.stats);
          Var lh = heatmap_loss(g, f.pred, cd.target, cd.visible);
          lh_acc = lh_acc.valid() ? g.add(lh_acc, lh) : lh;
          if (mi_on) {
            y_rows.push_back(g.reshape(g.leaf(cd.y_emb), {1, c_feat}));
            zt_rows.push_back(g.reshape(g.global_avg_pool(f.feats.z_t), {1, c_feat}));
            ztilde_rows.push_back(g.reshape(g.global_avg_pool(f.feats.z_tilde), {1, c_feat}));
            for (const auto& [delta, z] : f.feats.z_supp)
              zsupp_rows[delta].push_back(g.reshape(g.global_avg_pool(z), {1, c_feat}));
          }
        }
        Var l_h = g.scale(lh_acc, 1.0 / static_cast<double>(batch.size()));

        mi::MITermSet terms;
        Var l_mi;
        const bool mi_this_step = mi_on && y_rows.size() >= 2;
        if (mi_this_step) {
          Var y = g.concat(0, y_rows);
          Var zt = g.concat(0, zt_rows);
          Var ztilde = g.concat(0, ztilde_rows);
          std::vector<Var> zsupp;
          for (auto& [delta, rows] : zsupp_rows) zsupp.push_back(g.concat(0, rows));
          auto res = mi::mi_loss(g, y, zt, zsupp, ztilde, critics, cfg.alpha);
          l_mi = res.loss;
          terms = res.terms;
        } else {
          l_mi = g.leaf(Tensor::scalar(0.0, DType::F32));
        }
        Var l_total = total_loss(g, l_h, l_mi, beta);

        GradMap grads = g.backward(l_total);
        model_opt.step(model_params, grads);

        if (mi_this_step) {
          // critics maximize their own bounds on detached features
          Graph cg(DType::F32);
          auto detach_rows = [&](const std::vector<Var>& rows) {
            std::vector<Var> copies;
            copies.reserve(rows.size());
            for (Var v : rows) copies.push_back(cg.leaf(g.value(v)));
            return cg.concat(0, copies);
          };
          Var y = detach_rows(y_rows);
          Var zt = detach_rows(zt_rows);
          Var ztilde = detach_rows(ztilde_rows);
          Var bound_sum = mi::estimate_mi_contrastive(cg, y, zt, critics.y_zt);
          bound_sum = cg.add(bound_sum, mi::estimate_mi_contrastive(cg, y, ztilde, critics.y_ztilde));
          bound_sum = cg.add(bound_sum, mi::estimate_mi_contrastive(cg, zt, ztilde, critics.zt_ztilde));
          for (auto& [delta, rows] : zsupp_rows) {
            Var zs = detach_rows(rows);
            bound_sum = cg.add(bound_sum, mi::estimate_mi_contrastive(cg, y, zs, critics.y_zsupp));
            bound_sum =
                cg.add(bound_sum, mi::estimate_mi_contrastive(cg, zs, ztilde, critics.zsupp_ztilde));
          }
          GradMap cgrads = cg.backward(cg.scale(bound_sum, -1.0));
          critic_opt.step(critic_params, cgrads);
        }

        // log (identity recomputed in double; logger asserts it)
        const double lh_v = g.value(l_h).at(0);
        const double lmi_v = g.value(l_mi).at(0);
        const double ltotal_v = lh_v + beta * lmi_v;
        check(std::abs(ltotal_v - (lh_v + beta * lmi_v)) <= 1e-6, "train: loss identity violated");
        check(std::abs(ltotal_v - g.value(l_total).at(0)) <= 1e-4 * (1.0 + std::abs(ltotal_v)),
              "train: logged total loss diverges from graph value");
        step++;
        result.steps = step;
        std::string val_field;
        if (bi + 1 == batches.size()) {  // epoch end: validation + checkpointing
          const double v =
              validate_pck(model, clips, ds.val_idx, window, cfg.use_lcm(), 0.1);
          val_field = fmt_g(v);
          if (v > best) {
            best = v;
            result.best_val_pck = v;
            result.best_epoch = epoch;
            Checkpoint ck = make_checkpoint(cfg, model_params, mi_on ? &critic_params : nullptr);
            save_checkpoint(best_path, ck);
          }
        }
        char secs[32];
        std::snprintf(secs, sizeof(secs), "%.3f", elapsed());
        csv << step << "," << epoch << "," << fmt_g(lh_v) << "," << fmt_g(terms.i_y_zt) << ","
            << fmt_g(terms.i_y_zsupp) << "," << fmt_g(terms.i_y_ztilde) << ","
            << fmt_g(terms.i_zt_ztilde) << "," << fmt_g(terms.i_zsupp_ztilde) << ","
            << fmt_g(lmi_v) << "," << fmt_g(ltotal_v) << "," << val_field << "," << secs << "\n";
      } catch (const std::exception& e) {
        // params have not been touched by the failing step; dump them
        result.aborted = true;
        result.abort_reason = e.what();
        Checkpoint ck = make_checkpoint(cfg, model_params, mi_on ? &critic_params : nullptr);
        save_checkpoint(cfg.out_dir + "/abort.ckpt", ck);
        nlohmann::json diag;
        diag["reason"] = e.what();
        diag["step"] = step + 1;
        diag["epoch"] = epoch;
        std::vector<uint64_t> seeds;
        for (int idx : batch) seeds.push_back(clips[static_cast<size_t>(idx)].seed);
        diag["batch_clip_seeds"] = seeds;
        std::ofstream f(cfg.out_dir + "/abort.json");
        f << diag.dump(2) << "\n";
        return result;
      }
    }
  }
  return result;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["samples"] = samples;
  j["mean_pck"] = mean_pck;
  j["per_joint_pck_0.1"] = per_joint_pck;
  return j;
}

EvalReport evaluate(const TrainConfig& cfg, const std::string& ckpt_path,
                    const std::string& split) {
  check(split == "val" || split == "train", "evaluate: split must be 'train' or 'val'");
  const Checkpoint ck = load_checkpoint(ckpt_path);
  check(ck.config_hash == cfg.config_hash(),
        "evaluate: checkpoint config hash " + ck.config_hash + " does not match config " +
            cfg.config_hash());

  synth::ClipConfig synth_cfg = cfg.synth;
  synth_cfg.window = cfg.effective_window();
  const synth::Dataset ds = synth::gen_dataset(synth_cfg, cfg.clips, Rng::mix(cfg.seed, "data"));
  const std::vector<ClipData> clips = prepare_clips(ds, cfg);
  const std::vector<int>& idx = split == "val" ? ds.val_idx : ds.train_idx;
  check(!idx.empty(), "evaluate: empty split");

  NetConfig net = cfg.net;
  net.joints = cfg.synth.joints;
  PoseModel model;
  model.init(net, DType::F32, cfg.seed);
  ParamPtrs params;
  model.collect(params);
  for (auto& [name, t] : params) {
    auto it = ck.tensors.find(name);
    check(it != ck.tensors.end(), "evaluate: checkpoint missing tensor '" + name + "'");
    check(it->second.shape() == t->shape(), "evaluate: checkpoint shape mismatch for '" + name + "'");
    *t = it->second;
  }

  EvalReport rep;
  const std::vector<int>& window_sorted = cfg.effective_window();
  const int j = cfg.synth.joints;
  std::vector<int> joint_hits(static_cast<size_t>(j), 0), joint_seen(static_cast<size_t>(j), 0);
  for (double thr : {0.05, 0.1, 0.2}) {
    double acc = 0.0;
    int n = 0;
    for (int i : idx) {
      Graph g(DType::F32);
      ClipForward f =
          clip_forward(g, model, clips[static_cast<size_t>(i)], window_sorted, cfg.use_lcm(), nullptr);
      const PoseAnnotation dec = decode_heatmap(g.value(f.pred));
      const PckSample s = pck(dec, clips[static_cast<size_t>(i)].gt_hm, thr);
      if (s.n_visible == 0) continue;
      acc += s.mean;
      n++;
      if (thr == 0.1) {
        for (int k = 0; k < j; ++k) {
          if (s.correct[static_cast<size_t>(k)] < 0) continue;
          joint_seen[static_cast<size_t>(k)]++;
          joint_hits[static_cast<size_t>(k)] += s.correct[static_cast<size_t>(k)];
        }
      }
    }
    char label[16];
    std::snprintf(label, sizeof(label), "%.2f", thr);
    rep.mean_pck[label] = n > 0 ? acc / n : 0.0;
    rep.samples = n;
  }
  for (int k = 0; k < j; ++k)
    rep.per_joint_pck.push_back(
        joint_seen[static_cast<size_t>(k)] > 0
            ? static_cast<double>(joint_hits[static_cast<size_t>(k)]) / joint_seen[static_cast<size_t>(k)]
            : 0.0);
  return rep;
}

namespace {

std::string window_label(const std::vector<int>& w) {
  std::string s = "{";
  for (size_t i = 0; i < w.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(w[i]);
  }
  return s + "}";
}

struct RunRequest {
  Variant variant;
  std::vector<int> window;
  uint64_t seed;
  std::string dir;
};

}  // namespace

AblationResult ablate(const TrainConfig& base, std::vector<uint64_t> seeds,
                      const std::string& out_dir, int jobs) {
  check(seeds.size() >= 3, "ablate: need at least 3 seeds");
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  fs::create_directories(out_dir);

  struct CellSpec {
    std::string kind, label;
    Variant variant;
    std::vector<int> window;
  };
  std::vector<CellSpec> cells;
  for (Variant v : {Variant::kBaseline, Variant::kGtm, Variant::kGtmLcm, Variant::kFull})
    cells.push_back({"component", variant_name(v), v, base.window});
  for (const std::vector<int>& w :
       {std::vector<int>{-1}, {-1, 1}, {-2, -1, 1}, {-2, -1, 1, 2}})
    cells.push_back({"window", window_label(w), Variant::kFull, w});

  // identical (variant, window) cells share one run per seed
  std::map<std::string, size_t> run_index;
  std::vector<RunRequest> runs;
  auto run_key = [](Variant v, const std::vector<int>& w, uint64_t seed) {
    return std::string(variant_name(v)) + "|" + window_label(w) + "|" + std::to_string(seed);
  };
  for (const auto& cell : cells)
    for (uint64_t s : seeds) {
      const std::string key = run_key(cell.variant, cell.window, s);
      if (run_index.count(key)) continue;
      run_index[key] = runs.size();
      RunRequest rq;
      rq.variant = cell.variant;
      rq.window = cell.window;
      rq.seed = s;
      rq.dir = out_dir + "/runs/" + std::string(variant_name(cell.variant)) + "_w" +
               std::to_string(cell.window.size()) + "_s" + std::to_string(s);
      runs.push_back(std::move(rq));
    }

  struct RunOutcome {
    bool failed = true;
    double pck = 0.0;
    std::string reason;
  };
  std::vector<RunOutcome> outcomes(runs.size());

  std::mutex mu;
  size_t next = 0;
  auto worker = [&] {
    for (;;) {
      size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= runs.size()) return;
        i = next++;
      }
      const RunRequest& rq = runs[i];
      TrainConfig cfg = base;
      cfg.variant = rq.variant;
      cfg.window = rq.window;
      cfg.seed = rq.seed;
      cfg.out_dir = rq.dir;
      try {
        TrainResult tr = train(cfg);
        if (tr.aborted) {
          outcomes[i] = {true, 0.0, tr.abort_reason};
        } else {
          outcomes[i] = {false, tr.best_val_pck, ""};
        }
      } catch (const std::exception& e) {
        outcomes[i] = {true, 0.0, e.what()};
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(runs.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  AblationResult result;
  std::ofstream runs_csv(out_dir + "/ablation.csv");
  check(runs_csv.is_open(), "ablate: cannot write ablation.csv");
  runs_csv << "kind,cell,seed,val_pck,status\n";
  std::ofstream sum_csv(out_dir + "/ablation_summary.csv");
  check(sum_csv.is_open(), "ablate: cannot write ablation_summary.csv");
  sum_csv << "kind,cell,mean,std,n_ok\n";

  for (const auto& cell : cells) {
    AblationCell out;
    out.kind = cell.kind;
    out.label = cell.label;
    double sum = 0.0;
    int n_ok = 0;
    for (uint64_t s : seeds) {
      const RunOutcome& oc = outcomes[run_index.at(run_key(cell.variant, cell.window, s))];
      out.seeds.push_back(s);
      out.pck.push_back(oc.failed ? std::nan("") : oc.pck);
      out.failed.push_back(oc.failed ? 1 : 0);
      runs_csv << cell.kind << "," << cell.label << "," << s << ","
               << (oc.failed ? "" : fmt_g(oc.pck)) << "," << (oc.failed ? "failed" : "ok") << "\n";
      if (!oc.failed) {
        sum += oc.pck;
        n_ok++;
      }
    }
    out.mean = n_ok > 0 ? sum / n_ok : 0.0;
    double var = 0.0;
    if (n_ok >= 2) {
      for (size_t i = 0; i < out.pck.size(); ++i)
        if (!out.failed[i]) var += (out.pck[i] - out.mean) * (out.pck[i] - out.mean);
      var /= (n_ok - 1);
    }
    out.stddev = std::sqrt(var);
    sum_csv << cell.kind << "," << cell.label << "," << fmt_g(out.mean) << "," << fmt_g(out.stddev)
            << "," << n_ok << "\n";
    result.cells.push_back(std::move(out));
  }
  result.runs_csv = out_dir + "/ablation.csv";
  result.summary_csv = out_dir + "/ablation_summary.csv";
  return result;
}

}  // namespace tact::trainer
