#include <doctest.h>

#include <cmath>

#include "op_cases.hpp"
#include "oracles.hpp"
#include "rdas/error.hpp"
#include "rdas/params.hpp"
#include "rdas/tensor.hpp"

using namespace rdas;

TEST_SUITE("tensor") {

TEST_CASE("tensor shape and element access") {
  Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 6);
  CHECK(t[4] == 5);
  CHECK(t.shape_string() == "[2,3]");
  CHECK_THROWS_AS(Tensor(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("sigmoid and softmax fixed points") {
  Tape t;
  CHECK(t.value(ops::sigmoid(t.constant(Tensor::scalar(0.0))))[0] == doctest::Approx(0.5));
  const Tensor s = t.value(ops::softmax(t.constant(Tensor(1, 2, 0.0)), 1));
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));
  // Large magnitudes stay finite.
  const Tensor big = t.value(ops::sigmoid(t.constant(Tensor::from_rows({{-800, 800}}))));
  CHECK(big[0] == 0.0);
  CHECK(big[1] == 1.0);
}

TEST_CASE("matmul agrees with the triple loop") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(6), k = 1 + rng.below(6), m = 1 + rng.below(6);
    const Tensor a = oracle::random_tensor(n, k, rng);
    const Tensor b = oracle::random_tensor(k, m, rng);
    Tape t;
    const Tensor got = t.value(ops::matmul(t.constant(a), t.constant(b)));
    CHECK(oracle::max_abs_diff(got, oracle::matmul(a, b)) < 1e-12);
  }
}

TEST_CASE("shape errors name the op and both shapes") {
  Tape t;
  Var a = t.constant(Tensor(2, 3));
  Var b = t.constant(Tensor(2, 3));
  try {
    ops::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::add(a, t.constant(Tensor(3, 2))), ShapeError);
  CHECK_THROWS_AS(ops::concat(a, t.constant(Tensor(3, 2)), 1), ShapeError);
}

TEST_CASE("every op passes finite differences") {
  for (const auto& c : cases::op_cases()) {
    CAPTURE(c.name);
    ParamStore store;
    Rng rng(17);
    c.setup(store, rng);
    const auto r = grad_check(c.forward, store, 1e-5, 100);
    CHECK(r.coordinates_checked > 0);
    CHECK(r.max_relative_error < 1e-6);
  }
}

TEST_CASE("linear loss has an exact gradient") {
  // loss = sum(W x) with fixed x: dW = broadcast of x.
  ParamStore store;
  store.add("w", Tensor::from_rows({{0.5, -1.0, 2.0}}));
  const Tensor x = Tensor::from_rows({{1.5}, {-2.0}, {0.25}});
  Tape t(store);
  t.backward(ops::sum(ops::matmul(t.param("w"), t.constant(x))));
  const Tensor& g = *store.get("w").grad;
  CHECK(g[0] == 1.5);
  CHECK(g[1] == -2.0);
  CHECK(g[2] == 0.25);

  const auto r = grad_check([&](Tape& tp) { return ops::sum(ops::matmul(tp.param("w"), tp.constant(x))); }, store);
  CHECK(r.max_relative_error < 1e-9);
}

TEST_CASE("chain rule through sigmoid squared") {
  ParamStore store;
  store.add("w", Tensor::scalar(0.0));
  Tape t(store);
  Var s = ops::sigmoid(t.param("w"));
  t.backward(ops::mul(s, s));
  CHECK(store.get("w").grad->operator[](0) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("unused parameter gets an exactly zero gradient") {
  ParamStore store;
  store.add("used", Tensor::scalar(1.0));
  store.add("unused", Tensor(2, 2, 3.0));
  Tape t(store);
  t.backward(ops::scale(t.param("used"), 2.0));
  REQUIRE(store.get("unused").grad.has_value());
  CHECK(*store.get("unused").grad == Tensor(2, 2, 0.0));
  CHECK(store.get("used").grad->operator[](0) == 2.0);
}

TEST_CASE("backward needs a scalar loss") {
  Tape t;
  CHECK_THROWS_AS(t.backward(t.constant(Tensor(2, 1))), ShapeError);
}

TEST_CASE("gradients accumulate across passes until cleared") {
  ParamStore store;
  store.add("w", Tensor::scalar(2.0));
  for (int i = 0; i < 3; ++i) {
    Tape t(store);
    t.backward(ops::scale(t.param("w"), 1.5));
  }
  CHECK(store.get("w").grad->operator[](0) == doctest::Approx(4.5));
  store.clear_grad();
  CHECK_FALSE(store.get("w").grad.has_value());
}

TEST_CASE("dropout") {
  Rng rng(1);
  Tape t;
  const Tensor x = oracle::random_tensor(4, 5, rng);
  SUBCASE("p = 0 and evaluation mode are the identity") {
    CHECK(t.value(ops::dropout(t.constant(x), 0.0, true, rng)) == x);
    CHECK(t.value(ops::dropout(t.constant(x), 0.5, false, rng)) == x);
  }
  SUBCASE("kept entries are rescaled by 1 / (1 - p)") {
    const Tensor y = t.value(ops::dropout(t.constant(x), 0.25, true, rng));
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (y[i] != 0.0) CHECK(y[i] == doctest::Approx(x[i] / 0.75));
    }
  }
  SUBCASE("invalid rate") { CHECK_THROWS(ops::dropout(t.constant(x), 1.0, true, rng)); }
}

TEST_CASE("neg_log_pick on a confident prediction") {
  Tape t;
  Var p = t.constant(Tensor::from_rows({{1e-12, 1.0 - 1e-12}}));
  const std::vector<std::size_t> label{1};
  CHECK(t.value(ops::neg_log_pick(p, label))[0] < 1e-11);
}

TEST_CASE("a wrong backward rule is caught") {
  ParamStore store;
  Rng rng(4);
  store.add("a", oracle::random_tensor(3, 3, rng, 2.0));
  const auto bad = grad_check([](Tape& t) { return cases::weigh(t, cases::faulty_sigmoid(t.param("a"))); }, store);
  CHECK(bad.max_relative_error > 1e-2);
  const auto good = grad_check([](Tape& t) { return cases::weigh(t, ops::sigmoid(t.param("a"))); }, store);
  CHECK(good.max_relative_error < 1e-6);
}

}  // TEST_SUITE
