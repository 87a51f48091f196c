#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "wsm/checks.hpp"
#include "wsm/errors.hpp"
#include "wsm/gradcheck.hpp"

using namespace wsm;
using wsm::test::random_tensor;

TEST_SUITE("numerics") {

TEST_CASE("matmul identity and projector") {
  const Tensor b = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(bit_equal(matmul(Tensor::matrix({{1, 0}, {0, 1}}), b), b));
  const Tensor p = matmul(Tensor::matrix({{1, 0}, {0, 0}}), Tensor::matrix({{5}, {7}}));
  CHECK(bit_equal(p, Tensor::matrix({{5}, {0}})));
}

TEST_CASE("matmul matches the triple loop for dims up to 16") {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const std::size_t m = 1 + rng() % 16, n = 1 + rng() % 16, p = 1 + rng() % 16;
    const Tensor a = random_tensor({m, n}, rng), b = random_tensor({n, p}, rng);
    CHECK(max_abs_diff(matmul(a, b), checks::naive_matmul(a, b)) <= 1e-12);
  }
  Rng r3(3);
  const Tensor a = random_tensor({3, 4}, r3), b = random_tensor({4, 2}, r3);
  CHECK(max_abs_diff(matmul(a, b), checks::naive_matmul(a, b)) <= 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Tensor({2, 3}), Tensor({4, 2}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("matmul backward rule") {
  Rng rng(1);
  Parameter a("a", random_tensor({3, 4}, rng)), b("b", random_tensor({4, 2}, rng));
  const Tensor w = random_tensor({3, 2}, rng);
  LossFn loss = [&](Tape& t) { return test::readout(t, matmul(t.param(a), t.param(b)), w); };
  CHECK(finite_diff_check(loss, a) < 1e-7);
  CHECK(finite_diff_check(loss, b) < 1e-7);
}

TEST_CASE("gelu scalar values") {
  CHECK(gelu_value(0.0) == 0.0);
  CHECK(std::abs(gelu_value(10.0) - 10.0) < 1e-9);
  // Oracle: x·Φ(x) with Φ from the complementary error function.
  const double oracle = 1.0 * 0.5 * std::erfc(-1.0 / std::sqrt(2.0));
  CHECK(std::abs(gelu_value(1.0) - oracle) < 1e-15);
  CHECK(std::abs(gelu_value(1.0) - 0.841345) < 1e-6);
}

TEST_CASE("concat values, identity and gradient") {
  Tape tape;
  Parameter a("a", Tensor::matrix({{1}, {2}})), b("b", Tensor::matrix({{3}, {4}}));
  Var c = concat({tape.param(a), tape.param(b)}, 1);
  CHECK(bit_equal(c.value(), Tensor::matrix({{1, 3}, {2, 4}})));
  tape.backward(sum(c));
  CHECK(bit_equal(a.grad, Tensor({2, 1}, 1.0)));

  Tape t2(false);
  Var x = t2.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  CHECK(bit_equal(concat({x}, 0).value(), x.value()));
  CHECK_THROWS_AS(concat({x, t2.constant(Tensor({3, 3}))}, 1), DimensionError);
}

TEST_CASE("softmax symmetry, stability and normalization") {
  Tape tape(false);
  Var u = softmax(tape.constant(Tensor::vector({0, 0, 0})), 0);
  for (double v : u.value().data()) CHECK(std::abs(v - 1.0 / 3.0) < 1e-15);
  Var big = softmax(tape.constant(Tensor::vector({1000, 0})), 0);
  CHECK(big.value()[0] == 1.0);
  CHECK(big.value()[1] == doctest::Approx(0.0));
  Rng rng(5);
  Var r = softmax(tape.constant(random_tensor({7, 13}, rng, 5.0)), 1);
  for (std::size_t i = 0; i < 7; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 13; ++j) s += r.value()(i, j);
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("backward requires a scalar loss and runs once") {
  Parameter p("p", Tensor({2, 2}, 1.0));
  Tape tape;
  Var x = tape.param(p);
  CHECK_THROWS_AS(tape.backward(x), ContractError);
  Var l = sum(x);
  tape.backward(l);
  CHECK_THROWS_AS(tape.backward(l), ContractError);
}

TEST_CASE("unreachable parameters keep zero gradients") {
  Parameter used("used", Tensor({2}, 1.0)), unused("unused", Tensor({2}, 1.0));
  Tape tape;
  Var a = tape.param(used);
  Var b = tape.param(unused);
  (void)b;
  tape.backward(sum_squares(a));
  CHECK(bit_equal(unused.grad, Tensor({2})));
  CHECK(bit_equal(used.grad, Tensor({2}, 2.0)));
}

TEST_CASE("finite_diff_check on sum of squares") {
  Parameter x("x", Tensor::vector({3}));
  LossFn loss = [&](Tape& t) { return sum_squares(t.param(x)); };
  CHECK(finite_diff_check(loss, x) < 1e-7);
  Tape tape;
  x.zero_grad();
  tape.backward(sum_squares(tape.param(x)));
  CHECK(x.grad[0] == 6.0);
  CHECK_THROWS_AS(finite_diff_check(loss, x, 0.0), ContractError);
}

TEST_CASE("finite_diff_check restores the trainable flag on error") {
  Parameter x("x", Tensor::vector({1}), false);
  LossFn bad = [&](Tape& t) -> Var { throw NumericError("boom"); (void)t; };
  CHECK_THROWS_AS(finite_diff_check(bad, x), NumericError);
  CHECK_FALSE(x.trainable);
}

TEST_CASE("every differentiable op passes central differences") {
  Rng rng(11);
  const std::size_t T = 6, d = 5;
  Parameter x("x", random_tensor({T, d}, rng)), y("y", random_tensor({T, d}, rng));
  Parameter w("w", random_tensor({d, 3}, rng)), b("b", random_tensor({3}, rng));
  Parameter g("g", random_tensor({d}, rng)), row("row", random_tensor({1, d}, rng));
  Parameter mix("mix", random_tensor({2}, rng));
  const Tensor wt = random_tensor({T, d}, rng), w3 = random_tensor({T, 3}, rng);
  const Tensor w2 = random_tensor({T, 2 * d}, rng), w0 = random_tensor({2 * T, d}, rng);
  const ForwardContext eval;
  using test::readout;
  std::vector<std::pair<const char*, LossFn>> cases{
      {"linear", [&](Tape& t) { return readout(t, linear(t.param(x), t.param(w), t.param(b)), w3); }},
      {"add", [&](Tape& t) { return readout(t, add(t.param(x), t.param(y)), wt); }},
      {"sub", [&](Tape& t) { return readout(t, sub(t.param(x), t.param(y)), wt); }},
      {"mul", [&](Tape& t) { return readout(t, mul(t.param(x), t.param(y)), wt); }},
      {"scale", [&](Tape& t) { return readout(t, scale(t.param(x), -1.7), wt); }},
      {"gelu", [&](Tape& t) { return readout(t, gelu(t.param(x)), wt); }},
      {"concat1", [&](Tape& t) { return readout(t, concat({t.param(x), t.param(y)}, 1), w2); }},
      {"concat0", [&](Tape& t) { return readout(t, concat({t.param(x), t.param(y)}, 0), w0); }},
      {"softmax0", [&](Tape& t) { return readout(t, softmax(t.param(x), 0), wt); }},
      {"softmax1", [&](Tape& t) { return readout(t, softmax(t.param(x), 1), wt); }},
      {"log_softmax", [&](Tape& t) { return readout(t, log_softmax(t.param(x)), wt); }},
      {"sum_squares", [&](Tape& t) { return sum_squares(t.param(x)); }},
      {"layer_norm", [&](Tape& t) { return readout(t, layer_norm(t.param(x), t.param(g), t.param(row)), wt); }},
      {"mask_rows", [&](Tape& t) { return readout(t, mask_rows(t.param(x), 4), wt); }},
      {"broadcast_rows", [&](Tape& t) { return readout(t, broadcast_rows(t.param(row), T), wt); }},
      {"dropout_eval", [&](Tape& t) { return readout(t, dropout(t.param(x), 0.1, eval), wt); }},
      {"weighted_sum", [&](Tape& t) {
         return readout(t, weighted_sum({t.param(x), t.param(y)}, softmax(t.param(mix), 0)), wt);
       }},
  };
  for (auto& [name, loss] : cases) {
    CAPTURE(name);
    for (Parameter* p : {&x, &y, &w, &b, &g, &row, &mix}) {
      CAPTURE(p->name);
      CHECK(finite_diff_check(loss, *p) < 1e-4);
    }
  }
}

TEST_CASE("gradient linearity: backward of a sum equals the sum of backwards") {
  Rng rng(2);
  Parameter w("w", random_tensor({4, 4}, rng));
  const Tensor x = random_tensor({6, 4}, rng), w1 = random_tensor({6, 4}, rng), w2 = random_tensor({6, 4}, rng);
  auto f = [&](Tape& t, const Tensor& r) { return test::readout(t, gelu(matmul(t.constant(x), t.param(w))), r); };
  w.zero_grad();
  {
    Tape t;
    t.backward(add(f(t, w1), f(t, w2)));
  }
  const Tensor joint = w.grad;
  w.zero_grad();
  {
    Tape t;
    t.backward(f(t, w1));
  }
  {
    Tape t;
    t.backward(f(t, w2));
  }
  CHECK(max_abs_diff(joint, w.grad) <= 1e-12);
}

TEST_CASE("dropout is inverted, seeded and identity outside training") {
  Tape tape(false);
  Var x = tape.constant(Tensor({200, 10}, 1.0));
  CHECK(bit_equal(dropout(x, 0.1, ForwardContext{}).value(), x.value()));
  Rng r1(9), r2(9);
  const Tensor a = dropout(x, 0.1, ForwardContext{true, &r1}).value();
  const Tensor b = dropout(x, 0.1, ForwardContext{true, &r2}).value();
  CHECK(bit_equal(a, b));
  double mean = 0.0;
  for (double v : a.data()) {
    CHECK((v == 0.0 || std::abs(v - 1.0 / 0.9) < 1e-15));
    mean += v;
  }
  CHECK(mean / static_cast<double>(a.size()) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("non-finite values are errors, not silent") {
  Tape tape(false);
  Var x = tape.constant(Tensor::vector({1e308, 1e308}));
  CHECK_THROWS_AS(scale(x, 10.0), NumericError);
}

TEST_CASE("ops reject inputs from another tape") {
  Tape a(false), b(false);
  CHECK_THROWS_AS(add(a.constant(Tensor({2}, 1.0)), b.constant(Tensor({2}, 1.0))), ContractError);
}

TEST_CASE("allocator peak tracks live tensors") {
  memory::PeakScope scope;
  {
    Tensor t({1000});
    (void)t;
  }
  CHECK(scope.peak_bytes() >= 8000);
  CHECK(scope.peak_bytes() < 8000 + 1024);
}

}  // TEST_SUITE
