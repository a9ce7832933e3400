#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tact/gradcheck.hpp"
#include "test_util.hpp"

using namespace tact;

TEST_CASE("gradcheck: elementwise binary ops") {
  Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    auto gen = [](Rng& r) {
      std::map<std::string, Tensor> m;
      m["a"] = tt::uniform_t({3, 4}, r);
      m["b"] = tt::uniform_t({3, 4}, r);
      return m;
    };
    // fixed weighting so every output coordinate contributes asymmetrically
    Rng wr(100 + rep);
    const Tensor weights = rand_uniform({3, 4}, DType::F64, wr, 0.25, 1.0);
    auto build = [&weights](Graph& g, const std::map<std::string, Var>& in) {
      Var s = g.add(g.mul(in.at("a"), in.at("b")), g.sub(in.at("a"), in.at("b")));
      return g.sum(g.mul(s, g.leaf(weights)));
    };
    auto rep_ = gradcheck(gen, build, rng, {.tol = 1e-6});
    CHECK_MESSAGE(rep_.ok, rep_.note, " rel=", rep_.max_rel_err);
  }
}

TEST_CASE("gradcheck: sigmoid tight tolerance") {
  Rng rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    auto gen = [](Rng& r) {
      std::map<std::string, Tensor> m;
      m["x"] = tt::uniform_t({16}, r, -2.0, 2.0);
      return m;
    };
    auto build = [](Graph& g, const std::map<std::string, Var>& in) {
      return g.mean(g.sigmoid(in.at("x")));
    };
    auto r = gradcheck(gen, build, rng, {.tol = 1e-7});
    CHECK_MESSAGE(r.ok, r.note, " rel=", r.max_rel_err);
  }
}

TEST_CASE("gradcheck: tanh and relu away from the kink") {
  Rng rng(13);
  auto gen = [](Rng& r) {
    // keep |x| >= 0.1 so the relu kink is never straddled
    Tensor x = tt::uniform_t({24}, r, 0.1, 1.5);
    for (int64_t i = 0; i < x.numel(); ++i)
      if (r.uniform() < 0.5) x.set(i, -x.at(i));
    std::map<std::string, Tensor> m;
    m["x"] = x;
    return m;
  };
  auto build = [](Graph& g, const std::map<std::string, Var>& in) {
    return g.sum(g.relu(g.tanh(in.at("x"))));
  };
  for (int rep = 0; rep < 10; ++rep) {
    auto r = gradcheck(gen, build, rng, {.tol = 1e-7});
    CHECK_MESSAGE(r.ok, r.note, " rel=", r.max_rel_err);
  }
}

TEST_CASE("gradcheck: matmul") {
  Rng rng(14);
  auto gen = [](Rng& r) {
    std::map<std::string, Tensor> m;
    m["a"] = tt::uniform_t({3, 4}, r);
    m["b"] = tt::uniform_t({4, 2}, r);
    return m;
  };
  auto build = [](Graph& g, const std::map<std::string, Var>& in) {
    return g.sum(g.mul(g.matmul(in.at("a"), in.at("b")),
                       g.matmul(in.at("a"), in.at("b"))));
  };
  for (int rep = 0; rep < 10; ++rep) {
    auto r = gradcheck(gen, build, rng, {.tol = 1e-6});
    CHECK_MESSAGE(r.ok, r.note, " rel=", r.max_rel_err);
  }
}

TEST_CASE("gradcheck: conv2d incl. stride and padding") {
  Rng rng(15);
  auto gen = [](Rng& r) {
    std::map<std::string, Tensor> m;
    m["x"] = tt::uniform_t({1, 2, 5, 5}, r);
    m["w"] = tt::uniform_t({3, 2, 3, 3}, r);
    m["b"] = tt::uniform_t({3}, r);
    return m;
  };
  auto build_p1 = [](Graph& g, const std::map<std::string, Var>& in) {
    return g.mean(g.conv2d(in.at("x"), in.at("w"), in.at("b"), 1, 1));
  };
  auto build_s2 = [](Graph& g, const std::map<std::string, Var>& in) {
    return g.mean(g.conv2d(in.at("x"), in.at("w"), in.at("b"), 2, 1));
  };
  for (int rep = 0; rep < 10; ++rep) {
    auto r1 = gradcheck(gen, build_p1, rng, {.tol = 1e-6});
    CHECK_MESSAGE(r1.ok, r1.note, " rel=", r1.max_rel_err);
    auto r2 = gradcheck(gen, build_s2, rng, {.tol = 1e-6});
    CHECK_MESSAGE(r2.ok, r2.note, " rel=", r2.max_rel_err);
  }
}

TEST_CASE("gradcheck: reductions, pooling, reshape, slice, concat") {
  Rng rng(16);
  auto gen = [](Rng& r) {
    std::map<std::string, Tensor> m;
    m["x"] = tt::uniform_t({2, 3, 4}, r);
    m["y"] = tt::uniform_t({2, 3, 4}, r);
    return m;
  };
  auto build = [](Graph& g, const std::map<std::string, Var>& in) {
    Var c = g.concat_channels({in.at("x"), in.at("y")});
    Var p = g.global_avg_pool(c);
    Var s = g.slice(g.reshape(c, {4, 12}), 1, 2, 6);
    return g.add(g.sum(g.mul(p, p)), g.mean(s));
  };
  for (int rep = 0; rep < 10; ++rep) {
    auto r = gradcheck(gen, build, rng, {.tol = 1e-6});
    CHECK_MESSAGE(r.ok, r.note, " rel=", r.max_rel_err);
  }
}

TEST_CASE("gradcheck: linear and pair_concat and info_nce") {
  Rng rng(17);
  auto gen = [](Rng& r) {
    std::map<std::string, Tensor> m;
    m["a"] = tt::uniform_t({4, 3}, r);
    m["b"] = tt::uniform_t({4, 3}, r);
    m["w"] = tt::uniform_t({5, 6}, r);
    m["c"] = tt::uniform_t({5}, r);
    m["v"] = tt::uniform_t({1, 5}, r);
  /* final scalar via info_nce over a 4x4 score matrix */
    return m;
  };
  auto build = [](Graph& g, const std::map<std::string, Var>& in) {
    Var pairs = g.pair_concat(in.at("a"), in.at("b"));        // [16,6]
    Var h = g.tanh(g.linear(pairs, in.at("w"), in.at("c")));  // [16,5]
    Var s = g.matmul(h, g.reshape(in.at("v"), {5, 1}));       // [16,1]
    return g.info_nce(g.reshape(s, {4, 4}));
  };
  for (int rep = 0; rep < 10; ++rep) {
    auto r = gradcheck(gen, build, rng, {.tol = 1e-6});
    CHECK_MESSAGE(r.ok, r.note, " rel=", r.max_rel_err);
  }
}

TEST_CASE("gradcheck: random composite of five primitives") {
  Rng rng(18);
  auto gen = [](Rng& r) {
    std::map<std::string, Tensor> m;
    m["x"] = tt::uniform_t({2, 2, 4, 4}, r);
    m["w"] = tt::uniform_t({2, 2, 3, 3}, r);
    return m;
  };
  auto build = [](Graph& g, const std::map<std::string, Var>& in) {
    Var c = g.conv2d(in.at("x"), in.at("w"), 1, 1);  // 1 conv
    Var t = g.tanh(c);                               // 2
    Var m = g.mul(t, in.at("x"));                    // 3
    Var s = g.scale(m, 0.7);                         // 4
    return g.mean(s);                                // 5
  };
  auto r = gradcheck(gen, build, rng, {.tol = 1e-6});
  CHECK_MESSAGE(r.ok, r.note, " rel=", r.max_rel_err);
}

TEST_CASE("gradcheck rejects non-f64 inputs and bad eps") {
  Rng rng(19);
  auto gen = [](Rng& r) {
    std::map<std::string, Tensor> m;
    m["x"] = tt::uniform_t({2}, r, -1, 1, DType::F32);
    return m;
  };
  auto build = [](Graph& g, const std::map<std::string, Var>& in) { return g.sum(in.at("x")); };
  CHECK_THROWS(gradcheck(gen, build, rng));
  auto gen64 = [](Rng& r) {
    std::map<std::string, Tensor> m;
    m["x"] = tt::uniform_t({2}, r);
    return m;
  };
  CHECK_THROWS(gradcheck(gen64, build, rng, {.eps = 0.0}));
}
