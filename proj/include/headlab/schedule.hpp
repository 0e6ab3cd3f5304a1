#ifndef HEADLAB_SCHEDULE_HPP_
#define HEADLAB_SCHEDULE_HPP_

#include <cstdint>

namespace headlab {

// Step-indexed schedule for a training (or pruning) run. lambda ramps
// linearly to lambda_target over lambda_warmup_steps; gates train only while
// t < gate_freeze_step; the learning rate ramps linearly to lr_peak and then
// follows a cosine down to lr_final at total_steps.
struct PruneSchedule {
  int64_t total_steps = 0;
  double lambda_target = 0.0;
  int64_t lambda_warmup_steps = 0;
  int64_t gate_freeze_step = 0;
  double lr_peak = 1e-3;
  double lr_final = 1e-4;
  int64_t lr_warmup_steps = 0;

  bool gates_trainable_at(int64_t t) const { return t < gate_freeze_step; }
};

double lr_at_step(int64_t t, const PruneSchedule& s);
double lambda_at_step(int64_t t, const PruneSchedule& s);

}  // namespace headlab

#endif  // HEADLAB_SCHEDULE_HPP_
