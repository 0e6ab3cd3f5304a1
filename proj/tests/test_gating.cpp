// Gating module tests. Oracles: Monte-Carlo estimates of the
// hard-concrete distribution and frozen closed-form constants computed
// independently. Anchor: open probability at pi=2 is ~0.88.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "headlab/errors.hpp"
#include "headlab/gradcheck.hpp"
#include "headlab/gating.hpp"

using namespace headlab;

// frozen constants, computed independently from the closed forms:
//   expected_l0(2)  = sigmoid(2 - (2/3)*ln(0.1/1.1)) = 0.973366655261484
//   sigmoid(2)      = 0.8807970779778823
//   expected_l0(0)  = 0.8318221839916905
namespace {
constexpr double kExpectedL0At2 = 0.973366655261484;
constexpr double kSigmoid2 = 0.8807970779778823;
constexpr double kExpectedL0At0 = 0.8318221839916905;
}  // namespace

TEST_CASE("hard-concrete config validation") {
  HardConcreteConfig ok;
  CHECK_NOTHROW(ok.validate());
  HardConcreteConfig bad1{0.5, 0.1, 1.1};   // gamma must be negative
  CHECK_THROWS_AS(bad1.validate(), StateError);
  HardConcreteConfig bad2{0.5, -0.1, 0.9};  // zeta must exceed 1
  CHECK_THROWS_AS(bad2.validate(), StateError);
  HardConcreteConfig bad3{0.0, -0.1, 1.1};  // beta in (0,1]
  CHECK_THROWS_AS(bad3.validate(), StateError);
}

TEST_CASE("deterministic gates binarize at the pi=0 threshold") {
  HardConcreteConfig hc;
  // ghat(0) = sigmoid(0)*1.2 - 0.1 = 0.5 exactly, not > 0.5.
  auto g = deterministic_gates({0.0, 1e-9, -1e-9, 2.0, -2.0}, hc);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 1.0);
  CHECK(g[4] == 0.0);
}

TEST_CASE("sampled gates hit the limits for extreme logits") {
  HardConcreteConfig hc;
  std::mt19937_64 rng(5);
  Tensor hi = Tensor::full({1000}, 20.0);
  Tensor lo = Tensor::full({1000}, -20.0);
  auto gh = sample_gates(hi, hc, rng);
  auto gl = sample_gates(lo, hc, rng);
  int64_t ones = 0, zeros = 0;
  for (double v : gh.data()) ones += v == 1.0;
  for (double v : gl.data()) zeros += v == 0.0;
  CHECK(ones > 995);
  CHECK(zeros > 995);
  for (double v : gh.data()) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("Monte-Carlo gate statistics at pi = 2") {
  HardConcreteConfig hc;
  std::mt19937_64 rng(123);
  const int64_t n = 1000000;
  Tensor pi = Tensor::full({1}, 2.0);
  int64_t nonzero = 0, open = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double g = sample_gates(pi, hc, rng).data()[0];
    nonzero += g > 0.0;
    open += g > 0.5;
  }
  const double p_nonzero = static_cast<double>(nonzero) / n;
  const double p_open = static_cast<double>(open) / n;
  // P(g>0) equals the closed-form expected_l0 term.
  CHECK(p_nonzero == doctest::Approx(kExpectedL0At2).epsilon(0.01));
  CHECK(expected_l0_value(2.0, hc) == doctest::Approx(kExpectedL0At2).epsilon(1e-12));
  // a head with pi=2 is open ~88% of the time; P(g>1/2) = sigmoid(pi).
  CHECK(p_open == doctest::Approx(kSigmoid2).epsilon(0.01));
  CHECK(expected_open(2.0) == doctest::Approx(kSigmoid2).epsilon(1e-12));
}

TEST_CASE("expected_l0 closed form: frozen values and monotonicity") {
  HardConcreteConfig hc;
  CHECK(expected_l0_value(0.0, hc) == doctest::Approx(kExpectedL0At0).epsilon(1e-12));
  double prev = 0.0;
  for (double p = -6.0; p <= 6.0; p += 0.25) {
    const double v = expected_l0_value(p, hc);
    CHECK(v > prev);
    CHECK((v > 0.0 && v < 1.0));
    prev = v;
  }
}

TEST_CASE("expected_l0 tensor node matches scalar form and its gradient") {
  HardConcreteConfig hc;
  Tensor pi = Tensor::from_data({3}, {-1.0, 0.5, 2.0}, true);
  Tensor l0 = expected_l0(pi, hc);
  double want = 0.0;
  for (double p : pi.data()) want += expected_l0_value(p, hc);
  CHECK(l0.value() == doctest::Approx(want).epsilon(1e-12));
  auto f = [&] { return expected_l0(pi, hc); };
  CHECK(grad_check(f, {pi}) < 1e-6);
}

TEST_CASE("sample_gates gradient matches finite differences at fixed noise") {
  HardConcreteConfig hc;
  for (uint64_t seed : {1ull, 2ull, 9ull, 42ull}) {
    Tensor pi = Tensor::from_data({4}, {1.0, -0.5, 0.2, 2.5}, true);
    auto f = [&] {
      std::mt19937_64 rng(seed);  // same noise on every evaluation
      return sum(sample_gates(pi, hc, rng));
    };
    // Clamped coordinates have zero derivative on both sides except exactly
    // at the clamp boundary (measure zero for these seeds).
    CHECK(grad_check(f, {pi}) < 1e-5);
  }
}

TEST_CASE("gate scale s_g: reductions and clip rule") {
  // Output scaling: H over the number of open heads.
  CHECK(gate_scale_value({1, 1, 1, 1, 1, 1, 1, 1}) == doctest::Approx(1.0));
  CHECK(gate_scale_value({1, 1, 1, 1, 0, 0, 0, 0}) == doctest::Approx(2.0));
  CHECK(gate_scale_value({1, 0, 0, 0, 0, 0, 0, 0}) == doctest::Approx(8.0));
  CHECK(gate_scale_value({0, 0, 0, 0, 0, 0, 0, 0}) == doctest::Approx(8.0));
  // fractional gates below the clip point
  CHECK(gate_scale_value({0.5, 0.25, 0.0, 0.0}) == doctest::Approx(4.0));
}

TEST_CASE("gate_scale graph version: value, gradient, zero grad when clipped") {
  Tensor g = Tensor::from_data({4}, {0.9, 0.8, 0.0, 0.7}, true);
  Tensor s = gate_scale(g);
  CHECK(s.value() == doctest::Approx(4.0 / 2.4).epsilon(1e-12));
  auto f = [&] { return gate_scale(g); };
  CHECK(grad_check(f, {g}) < 1e-6);

  Tensor gc = Tensor::from_data({4}, {0.2, 0.1, 0.0, 0.0}, true);
  Tensor sc = gate_scale(gc);
  CHECK(sc.value() == 4.0);
  sc.backward();
  for (double d : gc.grad()) CHECK(d == 0.0);
}

TEST_CASE("sparsity_loss sums expected_l0 over layers; gradients flow") {
  GateSet gs = GateSet::make(3, 4, 2.0);
  Tensor sp = sparsity_loss(gs);
  CHECK(sp.value() == doctest::Approx(12.0 * kExpectedL0At2).epsilon(1e-12));
  sp.backward();
  for (const auto& pi : gs.pi) {
    REQUIRE(pi.has_grad());
    for (double d : pi.grad()) CHECK(d > 0.0);  // opening pressure is positive
  }
  CHECK(expected_sparsity(gs) == doctest::Approx(1.0 - kExpectedL0At2).epsilon(1e-12));
}

TEST_CASE("GateSet::make shapes and defaults") {
  GateSet gs = GateSet::make(2, 8, 0.0);
  CHECK(gs.num_layers() == 2);
  CHECK(gs.heads_per_layer() == 8);
  for (const auto& pi : gs.pi) {
    CHECK(pi.requires_grad());
    for (double v : pi.data()) CHECK(v == 0.0);
  }
  CHECK(gs.last_sample.size() == 2);
}
