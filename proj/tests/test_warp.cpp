#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tact/gradcheck.hpp"
#include "tact/warp.hpp"
#include "test_util.hpp"

using namespace tact;

namespace {

// theta whose induced sample positions stay >= margin away from bilinear
// cell boundaries at every output pixel.
Tensor safe_theta(Rng& rng, int64_t h, int64_t w, double margin = 0.08) {
  for (int tries = 0; tries < 200; ++tries) {
    Tensor theta({2, 3}, DType::F64);
    theta.set(0, 1.0 + rng.uniform(-0.02, 0.02));
    theta.set(1, rng.uniform(-0.02, 0.02));
    theta.set(2, 2.0 * rng.uniform(0.25, 0.45) / static_cast<double>(w) * (rng.uniform() < 0.5 ? 1 : -1));
    theta.set(3, rng.uniform(-0.02, 0.02));
    theta.set(4, 1.0 + rng.uniform(-0.02, 0.02));
    theta.set(5, 2.0 * rng.uniform(0.25, 0.45) / static_cast<double>(h) * (rng.uniform() < 0.5 ? 1 : -1));
    bool ok = true;
    for (int64_t i = 0; i < h && ok; ++i)
      for (int64_t j = 0; j < w && ok; ++j) {
        const double xb = (2.0 * j + 1.0) / w - 1.0;
        const double yb = (2.0 * i + 1.0) / h - 1.0;
        const double nx = theta.at(0) * xb + theta.at(1) * yb + theta.at(2);
        const double ny = theta.at(3) * xb + theta.at(4) * yb + theta.at(5);
        const double px = (nx + 1.0) * w / 2.0 - 0.5;
        const double py = (ny + 1.0) * h / 2.0 - 0.5;
        const double fx = px - std::floor(px);
        const double fy = py - std::floor(py);
        if (fx < margin || fx > 1 - margin || fy < margin || fy > 1 - margin) ok = false;
      }
    if (ok) return theta;
  }
  FAIL("could not draw a boundary-safe theta");
  return identity_theta(DType::F64);
}

// offsets with fractional part inside [0.1, 0.9] so deformed taps stay
// away from bilinear kinks (tap bases are integers).
Tensor safe_offsets(const Shape& s, Rng& rng) {
  Tensor o(s, DType::F64);
  for (int64_t i = 0; i < o.numel(); ++i) {
    const double base = static_cast<double>(rng.below(3) - 1);
    o.set(i, base + rng.uniform(0.1, 0.9));
  }
  return o;
}

}  // namespace

TEST_CASE("affine_grid: identity theta gives the pixel-center lattice") {
  Graph g(DType::F64);
  Var grid = affine_grid(g, g.leaf(identity_theta(DType::F64)), 4, 4);
  const Tensor& gr = g.value(grid);
  const double lattice[4] = {-0.75, -0.25, 0.25, 0.75};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      CHECK(gr.at(i * 4 + j) == doctest::Approx(lattice[j]).epsilon(1e-12));
      CHECK(gr.at(16 + i * 4 + j) == doctest::Approx(lattice[i]).epsilon(1e-12));
    }
}

TEST_CASE("affine_grid: pure x translation shifts only x coordinates") {
  Graph g(DType::F64);
  const double tv[6] = {1, 0, 0.5, 0, 1, 0};
  Var grid = affine_grid(g, g.leaf(Tensor::from({2, 3}, DType::F64, tv)), 3, 5);
  Graph g2(DType::F64);
  Var base = affine_grid(g2, g2.leaf(identity_theta(DType::F64)), 3, 5);
  for (int64_t i = 0; i < 15; ++i) {
    CHECK(g.value(grid).at(i) == doctest::Approx(g2.value(base).at(i) + 0.5).epsilon(1e-12));
    CHECK(g.value(grid).at(15 + i) == doctest::Approx(g2.value(base).at(15 + i)).epsilon(1e-12));
  }
}

TEST_CASE("affine_grid: parameter-level composition matches coordinate-level application") {
  Rng rng(21);
  for (int rep = 0; rep < 5; ++rep) {
    Tensor a = tt::uniform_t({2, 3}, rng, -1.0, 1.0);
    Tensor b = tt::uniform_t({2, 3}, rng, -1.0, 1.0);
    Graph g(DType::F64);
    Var composed = affine_grid(g, g.leaf(compose_affine(a, b)), 6, 5);
    Var inner = affine_grid(g, g.leaf(b), 6, 5);
    const Tensor& gi = g.value(inner);
    const Tensor& gc = g.value(composed);
    for (int64_t i = 0; i < 6; ++i)
      for (int64_t j = 0; j < 5; ++j) {
        const double x = gi.at(i * 5 + j), y = gi.at(30 + i * 5 + j);
        const double ex = a.at(0) * x + a.at(1) * y + a.at(2);
        const double ey = a.at(3) * x + a.at(4) * y + a.at(5);
        CHECK(gc.at(i * 5 + j) == doctest::Approx(ex).epsilon(1e-12));
        CHECK(gc.at(30 + i * 5 + j) == doctest::Approx(ey).epsilon(1e-12));
      }
  }
}

TEST_CASE("affine_grid rejects non-finite theta and bad extents") {
  Graph g(DType::F64);
  CHECK_THROWS(g.leaf(Tensor::full({2, 3}, DType::F64, std::nan(""))));
  Var ok = g.leaf(identity_theta(DType::F64));
  CHECK_THROWS(affine_grid(g, ok, 0, 4));
}

TEST_CASE("grid_sample: identity grid reproduces the input (f32)") {
  Rng rng(22);
  Graph g(DType::F32);
  Var x = g.leaf(rand_uniform({3, 7, 5}, DType::F32, rng, -1, 1));
  Var grid = affine_grid(g, g.leaf(identity_theta(DType::F32)), 7, 5);
  Var y = grid_sample(g, x, grid);
  CHECK(tt::max_diff(g.value(y), g.value(x)) < 1e-6);
}

TEST_CASE("grid_sample: +1 pixel x shift moves columns and zero-fills the edge") {
  Rng rng(23);
  Graph g(DType::F64);
  const int64_t h = 4, w = 6;
  Tensor xv = tt::uniform_t({2, h, w}, rng);
  // output pixel (i,j) samples input at (i, j+1)
  Tensor grid({2, h, w}, DType::F64);
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      grid.set(i * w + j, (2.0 * (j + 1) + 1.0) / w - 1.0);
      grid.set(h * w + i * w + j, (2.0 * i + 1.0) / h - 1.0);
    }
  Var y = grid_sample(g, g.leaf(xv), g.leaf(grid));
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const double expect = (j + 1 < w) ? xv.at((c * h + i) * w + j + 1) : 0.0;
        CHECK(g.value(y).at((c * h + i) * w + j) == doctest::Approx(expect).epsilon(1e-9));
      }
}

TEST_CASE("grid_sample: far out-of-bounds coordinates give zeros") {
  Rng rng(24);
  Graph g(DType::F64);
  Var x = g.leaf(tt::uniform_t({2, 4, 4}, rng));
  Var grid = g.leaf(Tensor::full({2, 4, 4}, DType::F64, -5.0));
  Var y = grid_sample(g, x, grid);
  CHECK(g.value(y).max_abs() == 0.0);
}

TEST_CASE("grid_sample is linear in the feature") {
  Rng rng(25);
  Graph g(DType::F64);
  Tensor f1 = tt::uniform_t({2, 5, 5}, rng);
  Tensor f2 = tt::uniform_t({2, 5, 5}, rng);
  Tensor gr = tt::uniform_t({2, 3, 3}, rng, -1.2, 1.2);
  const double a = 0.7, b = -1.3;
  Tensor combo({2, 5, 5}, DType::F64);
  for (int64_t i = 0; i < combo.numel(); ++i) combo.set(i, a * f1.at(i) + b * f2.at(i));
  Var y_combo = grid_sample(g, g.leaf(combo), g.leaf(gr));
  Var y1 = grid_sample(g, g.leaf(f1), g.leaf(gr));
  Var y2 = grid_sample(g, g.leaf(f2), g.leaf(gr));
  Var y_lin = g.add(g.scale(y1, a), g.scale(y2, b));
  CHECK(tt::max_diff(g.value(y_combo), g.value(y_lin)) < 1e-12);
}

TEST_CASE("gradcheck: affine_grid + grid_sample wrt theta and feature") {
  Rng rng(26);
  const int64_t h = 5, w = 6;
  auto gen = [&](Rng& r) {
    std::map<std::string, Tensor> m;
    m["x"] = tt::uniform_t({2, h, w}, r);
    m["theta"] = safe_theta(r, h, w);
    return m;
  };
  Rng wr(260);
  const Tensor weights = rand_uniform({2, h, w}, DType::F64, wr, 0.25, 1.0);
  auto build = [&](Graph& g, const std::map<std::string, Var>& in) {
    Var grid = affine_grid(g, in.at("theta"), h, w);
    Var y = grid_sample(g, in.at("x"), grid);
    return g.sum(g.mul(y, g.leaf(weights)));
  };
  for (int rep = 0; rep < 10; ++rep) {
    auto r = gradcheck(gen, build, rng, {.tol = 1e-4});
    CHECK_MESSAGE(r.ok, r.note, " rel=", r.max_rel_err);
  }
}

TEST_CASE("mod_deform_conv: zero offsets and unit masks equal standard conv (f64)") {
  Rng rng(27);
  const int64_t ci = 3, co = 2, h = 6, w = 5;
  Graph g(DType::F64);
  Var x = g.param("x", tt::uniform_t({ci, h, w}, rng));
  Var wt = g.param("w", tt::uniform_t({co, ci, 3, 3}, rng));
  Var bias = g.param("b", tt::uniform_t({co}, rng));
  Var off = g.leaf(Tensor({18, h, w}, DType::F64));
  Var mask = g.leaf(Tensor::full({9, h, w}, DType::F64, 1.0));
  Var y = modulated_deform_conv(g, x, off, mask, wt, bias);
  Var ref = g.conv2d(x, wt, bias, 1, 1);
  CHECK(tt::max_diff(g.value(y), g.value(ref)) < 1e-12);
}

TEST_CASE("mod_deform_conv: zero masks give a bias broadcast") {
  Rng rng(28);
  Graph g(DType::F64);
  const double bv[2] = {0.4, -1.1};
  Var y = modulated_deform_conv(g, g.leaf(tt::uniform_t({3, 4, 4}, rng)),
                                g.leaf(Tensor({18, 4, 4}, DType::F64)),
                                g.leaf(Tensor({9, 4, 4}, DType::F64)),
                                g.leaf(tt::uniform_t({2, 3, 3, 3}, rng)),
                                g.leaf(Tensor::from({2}, DType::F64, bv)));
  for (int64_t o = 0; o < 2; ++o)
    for (int64_t p = 0; p < 16; ++p)
      CHECK(g.value(y).at(o * 16 + p) == doctest::Approx(bv[o]).epsilon(1e-15));
}

TEST_CASE("mod_deform_conv: half-pixel offset on a 1-tap kernel is the bilinear midpoint") {
  Rng rng(29);
  Graph g(DType::F64);
  Tensor xv = tt::uniform_t({1, 3, 3}, rng);
  Tensor off({2, 3, 3}, DType::F64);
  off.set(0 * 9 + 4, 0.5);  // dy at the center pixel
  Var y = modulated_deform_conv(g, g.leaf(xv), g.leaf(off),
                                g.leaf(Tensor::full({1, 3, 3}, DType::F64, 1.0)),
                                g.leaf(Tensor::full({1, 1, 1, 1}, DType::F64, 1.0)),
                                g.leaf(Tensor({1}, DType::F64)));
  const double expect = 0.5 * (xv.at(1 * 3 + 1) + xv.at(2 * 3 + 1));
  CHECK(g.value(y).at(4) == doctest::Approx(expect).epsilon(1e-12));
  // off-center pixels keep their own values (offset zero there)
  CHECK(g.value(y).at(0) == doctest::Approx(xv.at(0)).epsilon(1e-12));
}

TEST_CASE("mod_deform_conv rejects field/kernel channel mismatches") {
  Graph g(DType::F64);
  Rng rng(30);
  Var x = g.leaf(tt::uniform_t({2, 4, 4}, rng));
  Var w3 = g.leaf(tt::uniform_t({1, 2, 3, 3}, rng));
  Var b = g.leaf(Tensor({1}, DType::F64));
  Var off_bad = g.leaf(Tensor({16, 4, 4}, DType::F64));
  Var mask = g.leaf(Tensor::full({9, 4, 4}, DType::F64, 0.5));
  CHECK_THROWS(modulated_deform_conv(g, x, off_bad, mask, w3, b));
  Var off = g.leaf(Tensor({18, 4, 4}, DType::F64));
  Var mask_bad = g.leaf(Tensor::full({8, 4, 4}, DType::F64, 0.5));
  CHECK_THROWS(modulated_deform_conv(g, x, off, mask_bad, w3, b));
}

TEST_CASE("mod_deform_conv is linear in weights and masks") {
  Rng rng(31);
  Graph g(DType::F64);
  Tensor xv = tt::uniform_t({2, 5, 5}, rng);
  Tensor offv = safe_offsets({18, 5, 5}, rng);
  Tensor maskv = rand_uniform({9, 5, 5}, DType::F64, rng, 0.1, 0.9);
  Tensor w1 = tt::uniform_t({2, 2, 3, 3}, rng);
  Tensor w2 = tt::uniform_t({2, 2, 3, 3}, rng);
  Tensor bz({2}, DType::F64);
  const double a = 0.3, b = 1.7;

  auto run = [&](const Tensor& wv, const Tensor& mv) {
    return g.value(modulated_deform_conv(g, g.leaf(xv), g.leaf(offv), g.leaf(mv), g.leaf(wv),
                                         g.leaf(bz)));
  };
  Tensor wmix({2, 2, 3, 3}, DType::F64);
  for (int64_t i = 0; i < wmix.numel(); ++i) wmix.set(i, a * w1.at(i) + b * w2.at(i));
  Tensor y_mix = run(wmix, maskv);
  Tensor y1 = run(w1, maskv);
  Tensor y2 = run(w2, maskv);
  for (int64_t i = 0; i < y_mix.numel(); ++i)
    CHECK(y_mix.at(i) == doctest::Approx(a * y1.at(i) + b * y2.at(i)).epsilon(1e-10));

  // linear in masks with zero bias
  Tensor mhalf({9, 5, 5}, DType::F64);
  for (int64_t i = 0; i < mhalf.numel(); ++i) mhalf.set(i, 0.5 * maskv.at(i));
  Tensor ym = run(w1, maskv);
  Tensor ymh = run(w1, mhalf);
  for (int64_t i = 0; i < ym.numel(); ++i)
    CHECK(ymh.at(i) == doctest::Approx(0.5 * ym.at(i)).epsilon(1e-10));
}

TEST_CASE("gradcheck: mod_deform_conv wrt all five inputs") {
  Rng rng(32);
  const int64_t ci = 2, co = 2, h = 4, w = 4;
  auto gen = [&](Rng& r) {
    std::map<std::string, Tensor> m;
    m["x"] = tt::uniform_t({ci, h, w}, r);
    m["off"] = safe_offsets({18, h, w}, r);
    m["mask"] = rand_uniform({9, h, w}, DType::F64, r, 0.1, 0.9);
    m["w"] = tt::uniform_t({co, ci, 3, 3}, r);
    m["b"] = tt::uniform_t({co}, r);
    return m;
  };
  Rng wr(320);
  const Tensor weights = rand_uniform({co, h, w}, DType::F64, wr, 0.25, 1.0);
  auto build = [&](Graph& g, const std::map<std::string, Var>& in) {
    Var y = modulated_deform_conv(g, in.at("x"), in.at("off"), in.at("mask"), in.at("w"),
                                  in.at("b"));
    return g.sum(g.mul(y, g.leaf(weights)));
  };
  for (int rep = 0; rep < 10; ++rep) {
    auto r = gradcheck(gen, build, rng, {.tol = 1e-4});
    CHECK_MESSAGE(r.ok, r.note, " rel=", r.max_rel_err);
  }
}
