#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "bflm/errors.hpp"
#include "bflm/nn.hpp"
#include "bflm/param_store.hpp"
#include "bflm/rng.hpp"

using namespace bflm;

TEST_CASE("matvec identity and hand cases") {
  Tensor I({2, 2});
  I.at(0, 0) = 1.0;
  I.at(1, 1) = 1.0;
  Tensor x({2}, {3.0, -1.0});
  Tensor y = matvec(I, x);
  CHECK(y[0] == doctest::Approx(3.0));
  CHECK(y[1] == doctest::Approx(-1.0));

  Tensor W({2, 2}, {1.0, 2.0, 0.0, 1.0});
  Tensor x2({2}, {1.0, 1.0});
  Tensor y2 = matvec(W, x2);
  CHECK(y2[0] == doctest::Approx(3.0));
  CHECK(y2[1] == doctest::Approx(1.0));
}

TEST_CASE("matvec matches the entry-wise oracle loop") {
  DetRng rng(7);
  Tensor W({5, 4});
  for (double& v : W.flat()) v = rng.uniform(-2.0, 2.0);
  Tensor x({4});
  for (double& v : x.flat()) v = rng.uniform(-2.0, 2.0);

  Tensor y = matvec(W, x);
  for (std::size_t i = 0; i < 5; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 4; ++j) acc += W.at(i, j) * x[j];
    CHECK(y[i] == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("matvec rejects shape mismatches") {
  Tensor W({2, 3});
  Tensor x({2});
  CHECK_THROWS_AS(matvec(W, x), ContractViolation);
}

TEST_CASE("softmax symmetry, scalar oracle and shift invariance") {
  Tensor z({4});
  Tensor p = softmax(z);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25).epsilon(1e-12));

  Tensor z2({2}, {0.0, std::log(3.0)});
  Tensor p2 = softmax(z2);
  CHECK(p2[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p2[1] == doctest::Approx(0.75).epsilon(1e-12));

  DetRng rng(3);
  Tensor a({9});
  for (double& v : a.flat()) v = rng.uniform(-5.0, 5.0);
  Tensor shifted = a;
  for (double& v : shifted.flat()) v += 17.25;
  Tensor pa = softmax(a), pb = softmax(shifted);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(std::abs(pa[i] - pb[i]) < 1e-12);
}

TEST_CASE("softmax sums to one for large inputs") {
  DetRng rng(11);
  Tensor z({100000});
  for (double& v : z.flat()) v = rng.uniform(-30.0, 30.0);
  Tensor p = softmax(z);
  double sum = 0.0;
  for (double v : p.flat()) sum += v;
  CHECK(std::abs(sum - 1.0) < 1e-9);
  CHECK_THROWS_AS(softmax(Tensor({1}, {std::numeric_limits<double>::quiet_NaN()})),
                  ContractViolation);
}

TEST_CASE("cross entropy hand values") {
  Tensor uniform4({4}, {0.25, 0.25, 0.25, 0.25});
  CHECK(cross_entropy(uniform4, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Tensor sure({3}, {0.0, 1.0, 0.0});
  CHECK(cross_entropy(sure, 1) == doctest::Approx(0.0));
  CHECK(cross_entropy(sure, 0) == std::numeric_limits<double>::infinity());

  Tensor p({2}, {0.25, 0.75});
  CHECK(cross_entropy(p, 1) == doctest::Approx(0.287682).epsilon(1e-5));
  CHECK_THROWS_AS(cross_entropy(p, 5), ContractViolation);
}

TEST_CASE("cross entropy is nonnegative, zero only at certainty") {
  DetRng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor z({6});
    for (double& v : z.flat()) v = rng.uniform(-4.0, 4.0);
    Tensor p = softmax(z);
    const int target = static_cast<int>(rng.below(6));
    const double ce = cross_entropy(p, target);
    CHECK(ce >= 0.0);
    if (ce == 0.0) CHECK(p[static_cast<std::size_t>(target)] == doctest::Approx(1.0));
  }
}

TEST_CASE("clip_elementwise clamps and is idempotent") {
  ParamStore store;
  store.add("g", {3});
  store.grad(0)[0] = 10.0;
  store.grad(0)[1] = -10.0;
  store.grad(0)[2] = 0.5;
  clip_elementwise(store, 5.0);
  CHECK(store.grad(0)[0] == 5.0);
  CHECK(store.grad(0)[1] == -5.0);
  CHECK(store.grad(0)[2] == 0.5);

  // identity on already-small values and exact idempotence
  DetRng rng(9);
  ParamStore s2;
  s2.add("a", {4, 4});
  for (double& v : s2.grad(0).flat()) v = rng.uniform(-3.0, 3.0);
  Tensor before = s2.grad(0);
  clip_elementwise(s2, 1.0);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double expect = std::clamp(before[i], -1.0, 1.0);
    CHECK(s2.grad(0)[i] == expect);
  }
  Tensor once = s2.grad(0);
  clip_elementwise(s2, 1.0);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(s2.grad(0)[i] == once[i]);
}

TEST_CASE("finite_diff_check on a quadratic") {
  ParamStore store;
  store.add("theta", {1, 1});  // rank-2 so init rules treat it as a weight
  store.value(0)[0] = 3.0;
  store.grad(0)[0] = 6.0;  // d(theta^2)/dtheta at 3
  auto loss = [&]() { return store.value(0)[0] * store.value(0)[0]; };
  GradCheckResult res = finite_diff_check(loss, store, 1e-5);
  CHECK(res.max_rel_error < 1e-9);
}

TEST_CASE("finite_diff_check on an empty store returns zero") {
  ParamStore store;
  auto loss = [&]() { return 1.0; };
  GradCheckResult res = finite_diff_check(loss, store, 1e-5);
  CHECK(res.max_rel_error == 0.0);
}

TEST_CASE("log_sum_exp dominates the max") {
  std::vector<double> vals = {-2.0, -1.5, -3.0};
  const double lse = log_sum_exp(vals);
  const double direct = std::log(std::exp(-2.0) + std::exp(-1.5) + std::exp(-3.0));
  CHECK(lse == doctest::Approx(direct).epsilon(1e-12));
  CHECK(lse >= -1.5);
}
