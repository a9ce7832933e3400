#pragma once

#include <string>
#include <vector>

#include "tact/tensor.hpp"

namespace tact::suites {

struct CheckResult {
  std::string name;
  bool ok = false;
  double value = 0.0;  // measured error / statistic
  double limit = 0.0;
  std::string detail;
};

struct SuiteReport {
  std::vector<CheckResult> checks;
  double seconds = 0.0;
  bool all_ok() const {
    for (const auto& c : checks)
      if (!c.ok) return false;
    return true;
  }
};

// Finite-difference checks for every differentiable op (f64, eps 1e-5;
// 10 instances each; 1e-6 for smooth primitives, 1e-4 for warps and
// composites including the end-to-end micro pipeline) plus the exact
// identities: deformable conv degenerating to standard conv, identity
// grid sampling, and the conditional-MI decomposition residual.
SuiteReport gradient_suite(uint64_t seed = 2024);

struct MiBenchRow {
  double rho = 0.0;
  double analytic = 0.0;  // -0.5 ln(1 - rho^2)
  double estimate = 0.0;  // mean over fresh eval batches after training
  bool ok = false;
};

struct MiBenchReport {
  std::vector<MiBenchRow> rows;
  double max_estimate_seen = 0.0;  // over all training/eval batches
  double log_b = 0.0;
  bool bound_ok = false;
  double seconds = 0.0;
  bool all_ok() const {
    if (!bound_ok) return false;
    for (const auto& r : rows)
      if (!r.ok) return false;
    return true;
  }
};

// Correlated-Gaussian benchmark for the contrastive estimator.
MiBenchReport mi_benchmark(uint64_t seed = 7, int batch = 512, int steps = 2000);

struct RecoverySeed {
  uint64_t seed = 0;
  double reduction = 0.0;        // 1 - aligned/unaligned mean feature distance
  double theta_tx_hit_frac = 0;  // held-out share with |t_x error| <= 0.1 normalized
};

struct RecoveryReport {
  std::vector<RecoverySeed> seeds;
  int successes = 0;  // reduction >= 0.5
  double seconds = 0.0;
  bool ok = false;    // >= 4 of 5 seeds succeed
};

// Trains the affine estimator on pure-translation clips with a frozen
// backbone and measures how much alignment shrinks the feature distance
// on held-out pairs.
RecoveryReport alignment_recovery(uint64_t seed = 5, int n_seeds = 5);
RecoverySeed alignment_recovery_seed(uint64_t seed);

}  // namespace tact::suites
