#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tact/alignment.hpp"
#include "tact/synthdata.hpp"

namespace tact::trainer {

enum class Variant { kBaseline, kGtm, kGtmLcm, kFull };
const char* variant_name(Variant v);
Variant variant_from_string(const std::string& s);

struct TrainConfig {
  std::vector<int> window{-2, -1, 1, 2};
  double alpha = 1.0;
  double beta = 0.1;
  Variant variant = Variant::kFull;
  double lr = 1e-3;
  double critic_lr = 1e-3;
  int epochs = 10;
  int batch = 8;
  uint64_t seed = 1;
  int clips = 240;
  double sigma = 1.5;
  synth::ClipConfig synth;
  NetConfig net;
  std::string out_dir = "runs/out";

  // variant gating: baseline forces an empty window and beta 0; gtm
  // disables the LCM and beta; gtm+lcm disables beta only
  std::vector<int> effective_window() const;
  double effective_beta() const;
  bool use_lcm() const;
  bool use_mi() const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  // hash over the structural fields (model + data shape), not seed/paths
  std::string config_hash() const;
};

struct AdamState {
  Tensor m, v;
  int64_t t = 0;
};

// Standard Adam update with bias correction, in place and deterministic.
void adam_step(Tensor& param, const Tensor& grad, AdamState& st, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}
  void step(ParamPtrs& params, const GradMap& grads);

 private:
  double lr_;
  std::map<std::string, AdamState> states_;
};

struct TrainResult {
  bool aborted = false;
  std::string abort_reason;
  double best_val_pck = 0.0;
  int best_epoch = -1;
  int steps = 0;
  std::string checkpoint_path;
  std::string metrics_path;
  PipelineStats stats;  // accumulated over all training forwards
};

TrainResult train(const TrainConfig& cfg);

struct EvalReport {
  int samples = 0;
  double threshold() const { return 0.1; }
  std::map<std::string, double> mean_pck;      // by threshold label "0.05"...
  std::vector<double> per_joint_pck;           // at 0.1
  nlohmann::json to_json() const;
};

// Re-generates the dataset from the config, loads the checkpoint
// (rejecting config-hash mismatches) and reports PCK on a split.
EvalReport evaluate(const TrainConfig& cfg, const std::string& ckpt_path,
                    const std::string& split = "val");

struct AblationCell {
  std::string kind;   // "component" or "window"
  std::string label;  // e.g. "gtm+lcm" or "{-2,-1,1,2}"
  std::vector<uint64_t> seeds;
  std::vector<double> pck;     // best val PCK@0.1 per seed; NaN when failed
  std::vector<uint8_t> failed;
  double mean = 0.0, stddev = 0.0;
};

struct AblationResult {
  std::vector<AblationCell> cells;
  std::string runs_csv, summary_csv;
};

// Component grid (baseline/gtm/gtm+lcm/full at the base window) plus
// window grid ({-1} .. {-2,-1,1,2} with the full variant), each over the
// given seeds. Identical (variant, window) cells share runs. Constituent
// failures mark the cell row failed and the sweep continues.
AblationResult ablate(const TrainConfig& base, std::vector<uint64_t> seeds,
                      const std::string& out_dir, int jobs = 2);

}  // namespace tact::trainer
