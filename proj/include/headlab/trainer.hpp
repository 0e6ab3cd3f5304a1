#ifndef HEADLAB_TRAINER_HPP_
#define HEADLAB_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "headlab/corpus.hpp"
#include "headlab/gating.hpp"
#include "headlab/model.hpp"
#include "headlab/optimizer.hpp"
#include "headlab/schedule.hpp"

namespace headlab {

// Per-layer pruned-head flags extracted from frozen deterministic gates.
struct PruneMask {
  std::vector<std::vector<bool>> pruned;  // [layer][head]

  int64_t pruned_heads() const;
  int64_t total_heads() const;
  double sparsity() const;
  std::vector<int64_t> surviving_heads() const;
};

PruneMask extract_prune_mask(const GateSet& gates);

// Removes pruned-head slices of every head-partitioned weight and absorbs
// that layer's s_g into the surviving w_o rows. A fully pruned layer
// degenerates to a residual identity (norms kept); a warning is emitted.
AllAttModel apply_structural_prune(const AllAttModel& model,
                                   const PruneMask& mask,
                                   const GateSet& gates,
                                   bool output_scaling = true);

enum class MetricKind { kBpc, kPpl };

struct EvalResult {
  double metric = 0.0;   // bpc or ppl
  double mean_nll = 0.0;
  int64_t tokens = 0;
};

// Eval mode: no dropout, deterministic gates (when given), memory carried
// across segments in a single lane.
EvalResult evaluate(const AllAttModel& model, const CorpusSplit& split,
                    MetricKind kind, const GateSet* gates = nullptr,
                    bool output_scaling = true);

struct TrainStepMetrics {
  int64_t step = 0;
  double nll = 0.0;
  double sparsity_loss = 0.0;
  double lambda = 0.0;
  double lr = 0.0;
  double expected_sparsity = 0.0;
  double hard_sparsity = 0.0;
};

struct TrainerOptions {
  double grad_clip_norm = 0.25;
  bool output_scaling = true;  // s_g rescaling of surviving heads; 1 when disabled
};

// Owns the optimization loop state for one run: per-lane memories, the
// schedule clock, and the rng stream for sampling and dropout.
class Trainer {
 public:
  Trainer(AllAttModel& model, GateSet* gates, const PruneSchedule& schedule,
          OptimizerOptions opt_opts, int64_t lanes, uint64_t seed,
          TrainerOptions opts = {});

  TrainStepMetrics train_step(const std::vector<SegmentBatcher::LaneSegment>& batch);
  void reset_memory();

  int64_t step() const { return step_; }
  Optimizer& optimizer() { return opt_; }
  std::mt19937_64& rng() { return rng_; }
  const PruneSchedule& schedule() const { return schedule_; }

  // Gate values for one forward pass under the current mode; stochastic
  // before the freeze step, deterministic 0/1 after.
  GateValues draw_gate_values(bool stochastic);

 private:
  AllAttModel& model_;
  GateSet* gates_;
  PruneSchedule schedule_;
  Optimizer opt_;
  TrainerOptions opts_;
  int64_t lanes_;
  std::vector<MemoryState> lane_mem_;
  std::mt19937_64 rng_;
  int64_t step_ = 0;
};

double hard_sparsity(const GateSet& gates);

}  // namespace headlab

#endif  // HEADLAB_TRAINER_HPP_
