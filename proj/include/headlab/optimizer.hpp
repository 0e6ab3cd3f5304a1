#ifndef HEADLAB_OPTIMIZER_HPP_
#define HEADLAB_OPTIMIZER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "headlab/tensor.hpp"

namespace headlab {

enum class OptVariant { kLamb, kAdam };

struct OptimizerOptions {
  OptVariant variant = OptVariant::kLamb;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.0;
  double trust_min = 0.01;
  double trust_max = 10.0;
};

struct MomentBuffers {
  std::vector<double> m, v;
};

// Single-tensor LAMB update: adam-style moments with bias correction, then
// the step is rescaled by ||param|| / ||adam_step||, clamped to
// [trust_min, trust_max]. Falls back to ratio 1 when either norm is zero.
// With variant kAdam the trust ratio is fixed at 1.
void lamb_update(Tensor& param, const std::vector<double>& grad,
                 MomentBuffers& state, int64_t step_count, double lr,
                 const OptimizerOptions& opts, bool decay_exempt = false);

// Tracks a named parameter list plus per-parameter moments. Gate logits are
// registered decay-exempt and can be masked out of updates after the freeze.
class Optimizer {
 public:
  explicit Optimizer(OptimizerOptions opts = {}) : opts_(opts) {}

  void add_param(const std::string& name, Tensor param,
                 bool decay_exempt = false, bool is_gate = false);
  // Applies one update from the grads currently stored on the parameters,
  // then zeroes them. Gate parameters are skipped when update_gates is false.
  void step(double lr, bool update_gates = true);
  void zero_grads();

  // Global-norm gradient clipping over all registered parameters.
  double clip_grad_norm(double max_norm);

  int64_t step_count() const { return step_count_; }
  void set_step_count(int64_t n) { step_count_ = n; }
  const OptimizerOptions& options() const { return opts_; }

  struct Slot {
    std::string name;
    Tensor param;
    bool decay_exempt;
    bool is_gate;
    MomentBuffers state;
  };
  std::vector<Slot>& slots() { return slots_; }

 private:
  OptimizerOptions opts_;
  std::vector<Slot> slots_;
  int64_t step_count_ = 0;
};

}  // namespace headlab

#endif  // HEADLAB_OPTIMIZER_HPP_
