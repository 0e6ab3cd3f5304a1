#ifndef HEADLAB_HARNESS_HPP_
#define HEADLAB_HARNESS_HPP_

#include <string>
#include <vector>

#include "headlab/corpus.hpp"
#include "headlab/model.hpp"
#include "headlab/schedule.hpp"
#include "headlab/trainer.hpp"

namespace headlab {

// Resolved configuration for one run. Serializes to a flat key=value file;
// a run is reproducible from (config, seed, corpus).
struct RunConfig {
  // model
  int64_t d = 64;
  int64_t heads = 4;
  int64_t n_persist = 64;
  int64_t layers = 2;
  int64_t seg_len = 64;
  int64_t mem_len = 64;
  double dropout_att = 0.2;
  double dropout_emb = 0.1;
  double dropout_hidden = 0.1;
  // data
  std::string data_path;
  std::string vocab_policy = "char";  // char | word
  double train_frac = 0.90;
  double valid_frac = 0.05;
  int64_t lanes = 8;
  // optimization
  int64_t steps = 2000;
  double lr_peak = 1e-3;
  double lr_final = 1e-4;
  double lr_warmup_frac = 0.05;
  double weight_decay = 0.0;
  std::string optimizer = "lamb";  // lamb | adam
  double grad_clip = 0.25;
  // pruning
  double lambda = 0.0;
  double lambda_warmup_frac = 0.05;
  double freeze_frac = 0.20;
  double gate_init = 2.0;
  bool no_lambda_warmup = false;
  bool no_gate_init = false;
  bool no_output_scaling = false;
  // misc
  uint64_t seed = 1;
  std::string metric = "bpc";  // bpc | ppl
  int64_t log_interval = 50;
  std::string out_dir;
  std::string checkpoint;
  std::string metrics_format = "json";  // json | csv

  PruneSchedule schedule() const;
  ModelConfig model_config(int64_t vocab) const;
  MetricKind metric_kind() const;
  VocabPolicy policy() const;
  OptimizerOptions optimizer_options() const;
  TrainerOptions trainer_options() const;
  double effective_gate_init() const { return no_gate_init ? 0.0 : gate_init; }

  void set_kv(const std::string& key, const std::string& value);
  std::string to_kv() const;
  static RunConfig from_file(const std::string& path);
  void save(const std::string& path) const;
};

Corpus load_corpus(const RunConfig& rc);

struct BaselineRun {
  AllAttModel model;
  std::vector<TrainStepMetrics> trace;
  EvalResult eval;
};
BaselineRun train_baseline(const RunConfig& rc, const Corpus& corpus);

struct PruneRun {
  AllAttModel gated_model;  // fine-tuned weights, gates kept separate
  GateSet gates;
  PruneMask mask;
  AllAttModel pruned_model;  // head weights removed, s_g absorbed
  std::vector<TrainStepMetrics> trace;
  EvalResult gated_eval, pruned_eval;
  double max_equiv_rel_err = 0.0;  // gated vs pruned forward agreement
};
PruneRun run_prune(const RunConfig& rc, const Corpus& corpus,
                   const AllAttModel& baseline);

// Max relative elementwise difference between the gated (deterministic) and
// structurally pruned forwards over `segments` eval segments.
double prune_equivalence_error(const AllAttModel& gated, const GateSet& gates,
                               const AllAttModel& pruned,
                               const CorpusSplit& split, int64_t segments,
                               bool output_scaling = true);

}  // namespace headlab

#endif  // HEADLAB_HARNESS_HPP_
