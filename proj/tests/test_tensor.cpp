#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "tact/graph.hpp"
#include "tact/rng.hpp"
#include "test_util.hpp"

using namespace tact;

TEST_CASE("shape bookkeeping and element access") {
  Tensor t({2, 3}, DType::F64);
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  t.set(4, 2.5);
  CHECK(t.at(4) == 2.5);
  CHECK_THROWS(Tensor({2, 0}, DType::F32));
  CHECK_THROWS(Tensor(Shape{}, DType::F32));
}

TEST_CASE("dump format roundtrip preserves dtype, shape and bits") {
  Rng rng(7);
  for (DType dt : {DType::F32, DType::F64}) {
    Tensor t = rand_uniform({3, 4, 5}, dt, rng, -10, 10);
    std::stringstream ss;
    write_tensor(ss, t);
    Tensor r = read_tensor(ss);
    CHECK(r.dtype() == t.dtype());
    CHECK(r.shape() == t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(r.at(i) == t.at(i));
  }
}

TEST_CASE("dump format rejects bad magic") {
  std::stringstream ss;
  ss << "NOPE";
  CHECK_THROWS(read_tensor(ss));
}

TEST_CASE("conv2d with identity kernel leaves input unchanged") {
  Rng rng(1);
  Graph g(DType::F64);
  Var x = g.leaf(tt::uniform_t({1, 1, 3, 3}, rng));
  Var w = g.leaf(Tensor::full({1, 1, 1, 1}, DType::F64, 1.0));
  Var y = g.conv2d(x, w, 1, 0);
  CHECK(tt::approx_eq(g.value(y), g.value(x), 0.0));
}

TEST_CASE("add with zeros is the identity") {
  Rng rng(2);
  Graph g(DType::F64);
  Var x = g.leaf(tt::uniform_t({2, 5}, rng));
  Var z = g.leaf(Tensor({2, 5}, DType::F64));
  CHECK(tt::approx_eq(g.value(g.add(x, z)), g.value(x), 0.0));
}

TEST_CASE("matmul against the identity matrix") {
  Graph g(DType::F64);
  const double a[4] = {1, 2, 3, 4};
  const double i2[4] = {1, 0, 0, 1};
  Var x = g.leaf(Tensor::from({2, 2}, DType::F64, a));
  Var e = g.leaf(Tensor::from({2, 2}, DType::F64, i2));
  Var y = g.matmul(x, e);
  CHECK(tt::approx_eq(g.value(y), g.value(x), 0.0));
}

TEST_CASE("shape mismatch is rejected with both shapes in the message") {
  Graph g(DType::F32);
  Var a = g.leaf(Tensor({2, 3}, DType::F32));
  Var b = g.leaf(Tensor({3, 2}, DType::F32));
  try {
    g.add(a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[3,2]") != std::string::npos);
  }
}

TEST_CASE("non-finite op output is rejected") {
  Graph g(DType::F64);
  Var x = g.leaf(Tensor::full({2}, DType::F64, 1e308));
  CHECK_THROWS(g.add(x, x));  // overflows to inf
}

TEST_CASE("forward determinism: identical inputs give bit-identical outputs") {
  Rng rng(3);
  Tensor x = tt::uniform_t({2, 3, 6, 6}, rng);
  Tensor w = tt::uniform_t({4, 3, 3, 3}, rng);
  Graph g1(DType::F64), g2(DType::F64);
  Var y1 = g1.conv2d(g1.leaf(x), g1.leaf(w), 1, 1);
  Var y2 = g2.conv2d(g2.leaf(x), g2.leaf(w), 1, 1);
  for (int64_t i = 0; i < g1.value(y1).numel(); ++i)
    CHECK(g1.value(y1).at(i) == g2.value(y2).at(i));
}

TEST_CASE("backward of sum gives ones") {
  Graph g(DType::F64);
  Rng rng(4);
  Var x = g.param("x", tt::uniform_t({2, 2}, rng));
  auto grads = g.backward(g.sum(x));
  CHECK(tt::approx_eq(grads.at("x"), Tensor::full({2, 2}, DType::F64, 1.0), 0.0));
}

TEST_CASE("backward of mean(x*x) for a single element is 2x") {
  Graph g(DType::F64);
  Var x = g.param("x", Tensor::full({1}, DType::F64, 2.0));
  auto grads = g.backward(g.mean(g.mul(x, x)));
  CHECK(grads.at("x").at(0) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("non-scalar loss is rejected") {
  Graph g(DType::F64);
  Var x = g.param("x", Tensor::full({2, 2}, DType::F64, 1.0));
  CHECK_THROWS(g.backward(x));
}

TEST_CASE("unreachable params get zero gradients") {
  Graph g(DType::F64);
  Var x = g.param("x", Tensor::full({3}, DType::F64, 1.0));
  Var y = g.param("unused", Tensor::full({2, 2}, DType::F64, 5.0));
  (void)y;
  auto grads = g.backward(g.sum(x));
  CHECK(grads.at("unused").shape() == Shape{2, 2});
  CHECK(grads.at("unused").max_abs() == 0.0);
}

TEST_CASE("adjoint linearity: grad of a+b equals sum of separate grads") {
  Rng rng(5);
  Tensor xv = tt::uniform_t({3, 3}, rng);
  auto make_parts = [&](Graph& g, Var x) {
    Var a = g.sum(g.mul(x, x));
    Var b = g.mean(g.sigmoid(x));
    return std::pair{a, b};
  };
  Graph g(DType::F64);
  Var x = g.param("x", xv);
  auto [a, b] = make_parts(g, x);
  auto g_ab = g.backward(g.add(a, b));

  Graph g2(DType::F64);
  Var x2 = g2.param("x", xv);
  auto [a2, b2] = make_parts(g2, x2);
  auto ga = g2.backward(a2);
  Graph g3(DType::F64);
  Var x3 = g3.param("x", xv);
  auto [a3, b3] = make_parts(g3, x3);
  auto gb = g3.backward(b3);

  for (int64_t i = 0; i < xv.numel(); ++i)
    CHECK(g_ab.at("x").at(i) ==
          doctest::Approx(ga.at("x").at(i) + gb.at("x").at(i)).epsilon(1e-12));
}

TEST_CASE("weight sharing: re-registering a param accumulates gradient once per use") {
  Graph g(DType::F64);
  Tensor wv = Tensor::full({1}, DType::F64, 3.0);
  Var w1 = g.param("w", wv);
  Var w2 = g.param("w", wv);
  CHECK(w1.id == w2.id);
  // loss = w*w -> dloss/dw = 2w = 6
  auto grads = g.backward(g.sum(g.mul(w1, w2)));
  CHECK(grads.at("w").at(0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("slice/concat roundtrip and gradient routing") {
  Rng rng(6);
  Tensor xv = tt::uniform_t({4, 2, 3}, rng);
  Graph g(DType::F64);
  Var x = g.param("x", xv);
  Var s0 = g.slice(x, 0, 0, 2);
  Var s1 = g.slice(x, 0, 2, 2);
  Var back = g.concat(0, {s0, s1});
  CHECK(tt::approx_eq(g.value(back), xv, 0.0));
  auto grads = g.backward(g.sum(g.mul(back, back)));
  for (int64_t i = 0; i < xv.numel(); ++i)
    CHECK(grads.at("x").at(i) == doctest::Approx(2.0 * xv.at(i)).epsilon(1e-12));
}

TEST_CASE("global average pool matches manual mean") {
  Rng rng(8);
  Tensor xv = tt::uniform_t({2, 2, 2}, rng);
  Graph g(DType::F64);
  Var p = g.global_avg_pool(g.leaf(xv));
  CHECK(g.value(p).shape() == Shape{2});
  for (int c = 0; c < 2; ++c) {
    double m = 0;
    for (int i = 0; i < 4; ++i) m += xv.at(c * 4 + i);
    CHECK(g.value(p).at(c) == doctest::Approx(m / 4).epsilon(1e-12));
  }
}
