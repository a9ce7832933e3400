#include "tact/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tact {

namespace {

double eval_loss(const std::map<std::string, Tensor>& inputs, const LossBuilder& build) {
  Graph g(DType::F64);
  std::map<std::string, Var> vars;
  for (const auto& [name, t] : inputs) vars[name] = g.param(name, t);
  Var loss = build(g, vars);
  check(g.value(loss).numel() == 1, "gradcheck: loss must be scalar");
  return g.value(loss).at(0);
}

GradcheckReport run_once(const std::map<std::string, Tensor>& inputs, const LossBuilder& build,
                         Rng& rng, const GradcheckOptions& opt) {
  GradcheckReport rep;
  GradMap analytic;
  {
    Graph g(DType::F64);
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : inputs) {
      check(t.dtype() == DType::F64, "gradcheck: inputs must be f64");
      check(t.all_finite(), "gradcheck: inputs must be finite");
      vars[name] = g.param(name, t);
    }
    Var loss = build(g, vars);
    analytic = g.backward(loss);
  }

  for (const auto& [name, t] : inputs) {
    const Tensor& grad = analytic.at(name);
    double scale = std::max(grad.max_abs(), 1e-6);

    std::vector<int64_t> coords;
    if (t.numel() <= opt.max_coords) {
      coords.resize(static_cast<size_t>(t.numel()));
      for (int64_t i = 0; i < t.numel(); ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      for (int64_t i = 0; i < opt.max_coords; ++i) coords.push_back(rng.below(t.numel()));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }

    std::map<std::string, Tensor> work = inputs;
    Tensor& wt = work.at(name);
    for (int64_t c : coords) {
      const double orig = wt.at(c);
      wt.set(c, orig + opt.eps);
      const double fp = eval_loss(work, build);
      wt.set(c, orig - opt.eps);
      const double fm = eval_loss(work, build);
      wt.set(c, orig);
      const double numeric = (fp - fm) / (2.0 * opt.eps);
      const double a = grad.at(c);
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({scale, std::abs(numeric), 1e-6});
      rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
      if (rel_err > rep.max_rel_err) {
        rep.max_rel_err = rel_err;
        rep.note = "worst: input '" + name + "' coord " + std::to_string(c);
      }
    }
  }
  rep.ok = rep.max_rel_err < opt.tol;
  return rep;
}

}  // namespace

GradcheckReport gradcheck(const InputGen& gen, const LossBuilder& build, Rng& rng,
                          const GradcheckOptions& opt) {
  check(opt.eps > 0, "gradcheck: eps must be > 0");
  GradcheckReport rep;
  for (int attempt = 0; attempt <= opt.max_resamples; ++attempt) {
    const auto inputs = gen(rng);
    rep = run_once(inputs, build, rng, opt);
    rep.resamples = attempt;
    if (rep.ok) return rep;
    // Likely a non-smooth sample point (kink or tie); redraw and retry.
  }
  rep.note += " (failed after " + std::to_string(opt.max_resamples) + " resamples)";
  return rep;
}

GradcheckReport gradcheck_params(const std::function<Var(Graph&)>& build, const ParamPtrs& params,
                                 Rng& rng, const GradcheckOptions& opt) {
  check(opt.eps > 0, "gradcheck_params: eps must be > 0");
  GradcheckReport rep;
  GradMap analytic;
  {
    Graph g(DType::F64);
    Var loss = build(g);
    check(g.value(loss).numel() == 1, "gradcheck_params: loss must be scalar");
    analytic = g.backward(loss);
  }
  auto loss_value = [&] {
    Graph g(DType::F64);
    return g.value(build(g)).at(0);
  };
  for (const auto& [name, tensor] : params) {
    check(tensor->dtype() == DType::F64, "gradcheck_params: params must be f64");
    auto it = analytic.find(name);
    check(it != analytic.end(), "gradcheck_params: '" + name + "' not registered by build");
    const Tensor& grad = it->second;
    const double scale = std::max(grad.max_abs(), 1e-6);

    std::vector<int64_t> coords;
    if (tensor->numel() <= opt.max_coords) {
      for (int64_t i = 0; i < tensor->numel(); ++i) coords.push_back(i);
    } else {
      for (int64_t i = 0; i < opt.max_coords; ++i) coords.push_back(rng.below(tensor->numel()));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    for (int64_t c : coords) {
      const double orig = tensor->at(c);
      tensor->set(c, orig + opt.eps);
      const double fp = loss_value();
      tensor->set(c, orig - opt.eps);
      const double fm = loss_value();
      tensor->set(c, orig);
      const double numeric = (fp - fm) / (2.0 * opt.eps);
      const double a = grad.at(c);
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({scale, std::abs(numeric), 1e-6});
      rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
      if (rel_err > rep.max_rel_err) {
        rep.max_rel_err = rel_err;
        rep.note = "worst: param '" + name + "' coord " + std::to_string(c);
      }
    }
  }
  rep.ok = rep.max_rel_err < opt.tol;
  return rep;
}

}  // namespace tact
