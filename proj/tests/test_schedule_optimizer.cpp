// Schedule and optimizer tests. Oracles: frozen hand-recomputed
// update values for two optimizer steps and closed-form schedule points.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "headlab/errors.hpp"
#include "headlab/optimizer.hpp"
#include "headlab/schedule.hpp"

using namespace headlab;

namespace {
PruneSchedule desk_schedule() {
  PruneSchedule s;
  s.total_steps = 1000;
  s.lambda_target = 0.02;
  s.lambda_warmup_steps = 50;
  s.gate_freeze_step = 200;
  s.lr_peak = 1e-3;
  s.lr_final = 1e-4;
  s.lr_warmup_steps = 100;
  return s;
}
}  // namespace

TEST_CASE("learning-rate schedule: ramp, peak, cosine midpoint, tail") {
  PruneSchedule s = desk_schedule();
  CHECK(lr_at_step(0, s) == 0.0);
  CHECK(lr_at_step(50, s) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(lr_at_step(100, s) == doctest::Approx(1e-3).epsilon(1e-12));
  // cosine midpoint (frac = 0.5): lr = final + 0.5*(peak-final).
  CHECK(lr_at_step(550, s) == doctest::Approx(0.00055).epsilon(1e-12));
  CHECK(lr_at_step(1000, s) == doctest::Approx(1e-4).epsilon(1e-9));
  CHECK_THROWS_AS(lr_at_step(-1, s), ScheduleError);
  CHECK_THROWS_AS(lr_at_step(1001, s), ScheduleError);
}

TEST_CASE("lambda schedule: linear warm-up capped at target") {
  PruneSchedule s = desk_schedule();
  CHECK(lambda_at_step(0, s) == 0.0);
  CHECK(lambda_at_step(25, s) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(lambda_at_step(50, s) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(lambda_at_step(999, s) == doctest::Approx(0.02).epsilon(1e-12));
  s.lambda_warmup_steps = 0;  // warm-up disabled: target from step 0
  CHECK(lambda_at_step(0, s) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK_THROWS_AS(lambda_at_step(-1, s), ScheduleError);
}

TEST_CASE("gate freeze boundary") {
  PruneSchedule s = desk_schedule();
  CHECK(s.gates_trainable_at(0));
  CHECK(s.gates_trainable_at(199));
  CHECK(!s.gates_trainable_at(200));
  CHECK(!s.gates_trainable_at(999));
}

TEST_CASE("adam variant two-step scalar oracle") {
  // frozen from an independent recomputation: p0=1, grads
  // {0.1, -0.05}, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-6, no decay.
  OptimizerOptions o;
  o.variant = OptVariant::kAdam;
  Tensor p = Tensor::scalar(1.0, true);
  MomentBuffers st;
  lamb_update(p, {0.1}, st, 1, 0.1, o);
  CHECK(p.value() == doctest::Approx(0.90000099999).epsilon(1e-10));
  lamb_update(p, {-0.05}, st, 2, 0.1, o);
  CHECK(p.value() == doctest::Approx(0.8733676329629362).epsilon(1e-10));
}

TEST_CASE("lamb variant two-step scalar oracle and trust-ratio behavior") {
  // for a scalar the trust ratio makes each step multiplicative:
  // |step| = lr * |p|, so p goes 1 -> 0.9 -> 0.81 on these grads.
  OptimizerOptions o;
  Tensor p = Tensor::scalar(1.0, true);
  MomentBuffers st;
  lamb_update(p, {0.1}, st, 1, 0.1, o);
  CHECK(p.value() == doctest::Approx(0.9).epsilon(1e-7));
  lamb_update(p, {-0.05}, st, 2, 0.1, o);
  CHECK(p.value() == doctest::Approx(0.81).epsilon(1e-7));
}

TEST_CASE("lamb trust ratio is clamped to [0.01, 10]") {
  OptimizerOptions o;
  // Huge parameter, unit-ish adam step: raw ratio far above 10 gets clamped.
  Tensor p = Tensor::from_data({2}, {1e4, 1e4}, true);
  MomentBuffers st;
  lamb_update(p, {1.0, 1.0}, st, 1, 1e-3, o);
  // adam step per coord ~= 1, so the applied step is lr * 10 * 1 = 0.01.
  CHECK(p.data()[0] == doctest::Approx(1e4 - 0.01).epsilon(1e-7));
}

TEST_CASE("zero gradient leaves parameters bitwise unchanged") {
  OptimizerOptions o;
  Tensor p = Tensor::from_data({3}, {1.0, -2.0, 3.0}, true);
  const std::vector<double> before = p.data();
  MomentBuffers st;
  lamb_update(p, {0.0, 0.0, 0.0}, st, 1, 0.1, o);
  for (int i = 0; i < 3; ++i) CHECK(p.data()[i] == before[i]);
}

TEST_CASE("weight decay applies unless the slot is decay-exempt") {
  OptimizerOptions o;
  o.variant = OptVariant::kAdam;
  o.weight_decay = 0.5;
  Tensor a = Tensor::scalar(2.0, true);
  Tensor b = Tensor::scalar(2.0, true);
  MomentBuffers sa, sb;
  lamb_update(a, {0.0}, sa, 1, 0.1, o, /*decay_exempt=*/false);
  lamb_update(b, {0.0}, sb, 1, 0.1, o, /*decay_exempt=*/true);
  CHECK(a.value() == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-12));
  CHECK(b.value() == 2.0);
}

TEST_CASE("Optimizer: gate slots skipped when updates are masked") {
  Optimizer opt;
  Tensor w = Tensor::scalar(1.0, true);
  Tensor g = Tensor::scalar(2.0, true);
  opt.add_param("w", w, false, /*is_gate=*/false);
  opt.add_param("gate", g, true, /*is_gate=*/true);
  w.grad() = {0.1};
  g.grad() = {0.1};
  opt.step(0.1, /*update_gates=*/false);
  CHECK(g.value() == 2.0);  // bitwise untouched
  CHECK(w.value() < 1.0);
  CHECK(opt.step_count() == 1);
  // Grads are cleared after the step.
  CHECK(!w.has_grad());
}

TEST_CASE("global gradient-norm clipping") {
  Optimizer opt;
  Tensor a = Tensor::from_data({2}, {0.0, 0.0}, true);
  opt.add_param("a", a);
  a.grad() = {3.0, 4.0};  // norm 5
  const double norm = opt.clip_grad_norm(0.25);
  CHECK(norm == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(a.grad()[0] == doctest::Approx(3.0 * 0.05).epsilon(1e-12));
  CHECK(a.grad()[1] == doctest::Approx(4.0 * 0.05).epsilon(1e-12));
  // Below the threshold: untouched.
  a.grad() = {0.1, 0.0};
  opt.clip_grad_norm(0.25);
  CHECK(a.grad()[0] == 0.1);
}
