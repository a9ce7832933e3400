#pragma once

#include <functional>
#include <map>
#include <string>

#include "tact/graph.hpp"
#include "tact/nets.hpp"
#include "tact/rng.hpp"

namespace tact {

struct GradcheckReport {
  bool ok = false;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  int resamples = 0;  // times the input point was redrawn (non-smooth sample)
  std::string note;
};

// Draws named f64 input tensors for one check instance.
using InputGen = std::function<std::map<std::string, Tensor>(Rng&)>;
// Builds a scalar loss from the inputs, registered as params of `g`.
using LossBuilder = std::function<Var(Graph& g, const std::map<std::string, Var>& in)>;

struct GradcheckOptions {
  double eps = 1e-5;
  double tol = 1e-6;
  int max_resamples = 5;
  // Coordinates checked per input tensor; larger tensors are subsampled.
  int64_t max_coords = 256;
};

// Central-difference check of analytic gradients, f64 only. Relative
// error is normalized per input tensor by the largest gradient magnitude
// seen for that tensor (with a small floor), so near-zero coordinates
// are judged against the tensor's scale.
GradcheckReport gradcheck(const InputGen& gen, const LossBuilder& build, Rng& rng,
                          const GradcheckOptions& opt = {});

// Same check against the named parameter tensors of a model. `build`
// must register each tensor in `params` under its map name (layers do
// this themselves) and return a scalar loss; the checker perturbs the
// underlying tensors in place and rebuilds.
GradcheckReport gradcheck_params(const std::function<Var(Graph&)>& build, const ParamPtrs& params,
                                 Rng& rng, const GradcheckOptions& opt = {});

}  // namespace tact
