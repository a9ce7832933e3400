#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tact/suites.hpp"
#include "tact/synthdata.hpp"
#include "tact/trainer.hpp"

namespace {

using tact::trainer::TrainConfig;

TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f.is_open()) throw std::runtime_error("cannot read config file: " + path);
  nlohmann::json j;
  f >> j;
  return TrainConfig::from_json(j);
}

std::vector<int> parse_window(const std::string& s) {
  std::vector<int> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoi(cur));
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  return out;
}

void apply_overrides(TrainConfig& cfg, const std::string& out, const std::string& variant,
                     const std::string& window, uint64_t seed, bool seed_set) {
  if (!out.empty()) cfg.out_dir = out;
  if (!variant.empty()) cfg.variant = tact::trainer::variant_from_string(variant);
  if (!window.empty()) cfg.window = parse_window(window);
  if (seed_set) cfg.seed = seed;
}

int run_gradcheck() {
  auto report = tact::suites::gradient_suite();
  for (const auto& c : report.checks)
    std::printf("[%s] %-55s measured %.3g (limit %.3g)%s%s\n", c.ok ? "PASS" : "FAIL",
                c.name.c_str(), c.value, c.limit, c.detail.empty() ? "" : "  ",
                c.detail.c_str());
  std::printf("gradient suite: %zu checks in %.1f s -> %s\n", report.checks.size(), report.seconds,
              report.all_ok() ? "all passed" : "FAILURES");
  return report.all_ok() ? 0 : 1;
}

int run_mi_bench(const std::string& out, int batch, int steps) {
  auto report = tact::suites::mi_benchmark(7, batch, steps);
  for (const auto& r : report.rows)
    std::printf("[%s] rho=%.1f analytic %.4f nats, estimate %.4f nats\n", r.ok ? "PASS" : "FAIL",
                r.rho, r.analytic, r.estimate);
  std::printf("[%s] estimator bound: max estimate %.4f <= log B = %.4f\n",
              report.bound_ok ? "PASS" : "FAIL", report.max_estimate_seen, report.log_b);
  std::printf("mi benchmark finished in %.1f s\n", report.seconds);
  if (!out.empty()) {
    nlohmann::json j;
    j["log_b"] = report.log_b;
    j["max_estimate_seen"] = report.max_estimate_seen;
    j["seconds"] = report.seconds;
    for (const auto& r : report.rows)
      j["rows"].push_back({{"rho", r.rho}, {"analytic", r.analytic}, {"estimate", r.estimate},
                           {"ok", r.ok}});
    std::filesystem::create_directories(std::filesystem::path(out).parent_path().empty()
                                            ? "."
                                            : std::filesystem::path(out).parent_path().string());
    std::ofstream f(out);
    f << j.dump(2) << "\n";
  }
  return report.all_ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal feature alignment toolkit"};
  app.require_subcommand(1);

  std::string config_path, out, variant, window, ckpt, split = "val", report_path;
  uint64_t seed = 0;
  bool seed_set = false;
  int clips = 0, batch = 512, steps = 2000, seeds_n = 3, jobs = 2;

  auto add_common = [&](CLI::App* cmd, bool need_config) {
    auto* copt = cmd->add_option("--config", config_path, "JSON config file");
    if (need_config) copt->required();
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--variant", variant, "baseline|gtm|gtm+lcm|full");
    cmd->add_option("--window", window, "comma list, e.g. -2,-1,1,2");
  };

  auto* cmd_gradcheck = app.add_subcommand("gradcheck", "run the gradient and identity suites");
  auto* cmd_bench = app.add_subcommand("mi-bench", "correlated-Gaussian estimator benchmark");
  cmd_bench->add_option("--out", report_path, "write a JSON report here");
  cmd_bench->add_option("--batch", batch, "batch size");
  cmd_bench->add_option("--steps", steps, "critic steps");
  auto* cmd_gen = app.add_subcommand("gen-data", "generate and export a synthetic dataset");
  add_common(cmd_gen, false);
  cmd_gen->add_option("--clips", clips, "number of clips");
  auto* cmd_train = app.add_subcommand("train", "train a model");
  add_common(cmd_train, true);
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(cmd_eval, true);
  cmd_eval->add_option("--ckpt", ckpt, "checkpoint path")->required();
  cmd_eval->add_option("--split", split, "train|val");
  cmd_eval->add_option("--report", report_path, "write the JSON report here");
  auto* cmd_ablate = app.add_subcommand("ablate", "run the component and window grids");
  add_common(cmd_ablate, true);
  cmd_ablate->add_option("--seeds", seeds_n, "number of seeds (>= 3)");
  cmd_ablate->add_option("--jobs", jobs, "parallel runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (cmd_gradcheck->parsed()) return run_gradcheck();
    if (cmd_bench->parsed()) return run_mi_bench(report_path, batch, steps);

    TrainConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    apply_overrides(cfg, out, variant, window, seed, seed_set);

    if (cmd_gen->parsed()) {
      if (clips > 0) cfg.clips = clips;
      tact::synth::ClipConfig sc = cfg.synth;
      sc.window = cfg.effective_window().empty() ? sc.window : cfg.effective_window();
      const std::string dir = cfg.out_dir.empty() ? "dataset" : cfg.out_dir;
      auto ds = tact::synth::gen_dataset(sc, cfg.clips, tact::Rng::mix(cfg.seed, "data"));
      tact::synth::export_dataset(ds, dir);
      nlohmann::json j = cfg.to_json();
      j["config_hash"] = cfg.config_hash();
      std::ofstream f(dir + "/resolved_config.json");
      f << j.dump(2) << "\n";
      std::printf("wrote %zu clips to %s (train %zu, val %zu)\n", ds.clips.size(), dir.c_str(),
                  ds.train_idx.size(), ds.val_idx.size());
      return 0;
    }
    if (cmd_train->parsed()) {
      auto result = tact::trainer::train(cfg);
      if (result.aborted) {
        std::fprintf(stderr, "training aborted: %s\n", result.abort_reason.c_str());
        return 1;
      }
      std::printf("trained %d steps; best val PCK@0.1 %.4f (epoch %d)\ncheckpoint: %s\nmetrics: %s\n",
                  result.steps, result.best_val_pck, result.best_epoch,
                  result.checkpoint_path.c_str(), result.metrics_path.c_str());
      return 0;
    }
    if (cmd_eval->parsed()) {
      auto rep = tact::trainer::evaluate(cfg, ckpt, split);
      const std::string text = rep.to_json().dump(2);
      std::printf("%s\n", text.c_str());
      if (!report_path.empty()) {
        std::ofstream f(report_path);
        f << text << "\n";
      }
      return 0;
    }
    if (cmd_ablate->parsed()) {
      if (seeds_n < 3) {
        std::fprintf(stderr, "ablate: need at least 3 seeds\n");
        return 2;
      }
      std::vector<uint64_t> seed_list;
      for (int i = 0; i < seeds_n; ++i) seed_list.push_back(cfg.seed + static_cast<uint64_t>(i));
      const std::string dir = cfg.out_dir.empty() ? "ablation" : cfg.out_dir;
      {
        std::filesystem::create_directories(dir);
        nlohmann::json j = cfg.to_json();
        j["seeds"] = seed_list;
        std::ofstream f(dir + "/resolved_config.json");
        f << j.dump(2) << "\n";
      }
      auto result = tact::trainer::ablate(cfg, seed_list, dir, jobs);
      for (const auto& cell : result.cells)
        std::printf("%-9s %-14s mean %.4f  std %.4f\n", cell.kind.c_str(), cell.label.c_str(),
                    cell.mean, cell.stddev);
      std::printf("table: %s\nsummary: %s\n", result.runs_csv.c_str(), result.summary_csv.c_str());
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
