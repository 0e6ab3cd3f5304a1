#include "headlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "headlab/errors.hpp"

namespace headlab {

PruneSchedule RunConfig::schedule() const {
  PruneSchedule s;
  s.total_steps = steps;
  s.lambda_target = lambda;
  s.lambda_warmup_steps =
      no_lambda_warmup ? 0 : static_cast<int64_t>(steps * lambda_warmup_frac);
  s.gate_freeze_step = static_cast<int64_t>(steps * freeze_frac);
  s.lr_peak = lr_peak;
  s.lr_final = lr_final;
  s.lr_warmup_steps = static_cast<int64_t>(steps * lr_warmup_frac);
  return s;
}

ModelConfig RunConfig::model_config(int64_t vocab) const {
  ModelConfig c;
  c.d = d;
  c.heads = heads;
  c.n_persist = n_persist;
  c.layers = layers;
  c.seg_len = seg_len;
  c.mem_len = mem_len;
  c.vocab = vocab;
  c.dropout_att = dropout_att;
  c.dropout_emb = dropout_emb;
  c.dropout_hidden = dropout_hidden;
  c.validate();
  return c;
}

MetricKind RunConfig::metric_kind() const {
  if (metric == "bpc") return MetricKind::kBpc;
  if (metric == "ppl") return MetricKind::kPpl;
  throw UsageError("unknown metric '" + metric + "' (want bpc or ppl)");
}

VocabPolicy RunConfig::policy() const {
  if (vocab_policy == "char") return VocabPolicy::kChar;
  if (vocab_policy == "word") return VocabPolicy::kWord;
  throw UsageError("unknown vocab policy '" + vocab_policy + "'");
}

OptimizerOptions RunConfig::optimizer_options() const {
  OptimizerOptions o;
  if (optimizer == "lamb") o.variant = OptVariant::kLamb;
  else if (optimizer == "adam") o.variant = OptVariant::kAdam;
  else throw UsageError("unknown optimizer '" + optimizer + "'");
  o.weight_decay = weight_decay;
  return o;
}

TrainerOptions RunConfig::trainer_options() const {
  TrainerOptions t;
  t.grad_clip_norm = grad_clip;
  t.output_scaling = !no_output_scaling;
  return t;
}

void RunConfig::set_kv(const std::string& key, const std::string& value) {
  auto as_i = [&] { return std::stoll(value); };
  auto as_d = [&] { return std::stod(value); };
  auto as_b = [&] { return value == "1" || value == "true"; };
  if (key == "d") d = as_i();
  else if (key == "heads") heads = as_i();
  else if (key == "n_persist") n_persist = as_i();
  else if (key == "layers") layers = as_i();
  else if (key == "seg_len") seg_len = as_i();
  else if (key == "mem_len") mem_len = as_i();
  else if (key == "dropout_att") dropout_att = as_d();
  else if (key == "dropout_emb") dropout_emb = as_d();
  else if (key == "dropout_hidden") dropout_hidden = as_d();
  else if (key == "data_path") data_path = value;
  else if (key == "vocab_policy") vocab_policy = value;
  else if (key == "train_frac") train_frac = as_d();
  else if (key == "valid_frac") valid_frac = as_d();
  else if (key == "lanes") lanes = as_i();
  else if (key == "steps") steps = as_i();
  else if (key == "lr_peak") lr_peak = as_d();
  else if (key == "lr_final") lr_final = as_d();
  else if (key == "lr_warmup_frac") lr_warmup_frac = as_d();
  else if (key == "weight_decay") weight_decay = as_d();
  else if (key == "optimizer") optimizer = value;
  else if (key == "grad_clip") grad_clip = as_d();
  else if (key == "lambda") lambda = as_d();
  else if (key == "lambda_warmup_frac") lambda_warmup_frac = as_d();
  else if (key == "freeze_frac") freeze_frac = as_d();
  else if (key == "gate_init") gate_init = as_d();
  else if (key == "no_lambda_warmup") no_lambda_warmup = as_b();
  else if (key == "no_gate_init") no_gate_init = as_b();
  else if (key == "no_output_scaling") no_output_scaling = as_b();
  else if (key == "seed") seed = std::stoull(value);
  else if (key == "metric") metric = value;
  else if (key == "log_interval") log_interval = as_i();
  else if (key == "out_dir") out_dir = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "metrics_format") metrics_format = value;
  else throw UsageError("unknown config key '" + key + "'");
}

std::string RunConfig::to_kv() const {
  std::ostringstream os;
  os.precision(17);
  os << "d=" << d << "\nheads=" << heads << "\nn_persist=" << n_persist
     << "\nlayers=" << layers << "\nseg_len=" << seg_len
     << "\nmem_len=" << mem_len << "\ndropout_att=" << dropout_att
     << "\ndropout_emb=" << dropout_emb
     << "\ndropout_hidden=" << dropout_hidden << "\ndata_path=" << data_path
     << "\nvocab_policy=" << vocab_policy << "\ntrain_frac=" << train_frac
     << "\nvalid_frac=" << valid_frac << "\nlanes=" << lanes
     << "\nsteps=" << steps << "\nlr_peak=" << lr_peak
     << "\nlr_final=" << lr_final << "\nlr_warmup_frac=" << lr_warmup_frac
     << "\nweight_decay=" << weight_decay << "\noptimizer=" << optimizer
     << "\ngrad_clip=" << grad_clip << "\nlambda=" << lambda
     << "\nlambda_warmup_frac=" << lambda_warmup_frac
     << "\nfreeze_frac=" << freeze_frac << "\ngate_init=" << gate_init
     << "\nno_lambda_warmup=" << (no_lambda_warmup ? 1 : 0)
     << "\nno_gate_init=" << (no_gate_init ? 1 : 0)
     << "\nno_output_scaling=" << (no_output_scaling ? 1 : 0)
     << "\nseed=" << seed << "\nmetric=" << metric
     << "\nlog_interval=" << log_interval << "\nout_dir=" << out_dir
     << "\ncheckpoint=" << checkpoint
     << "\nmetrics_format=" << metrics_format << "\n";
  return os.str();
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config file " + path);
  RunConfig rc;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config " + path + ":" + std::to_string(lineno) +
                       ": expected key=value");
    rc.set_kv(line.substr(0, eq), line.substr(eq + 1));
  }
  return rc;
}

void RunConfig::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write config file " + path);
  f << to_kv();
}

Corpus load_corpus(const RunConfig& rc) {
  if (rc.data_path.empty()) throw UsageError("no data path configured");
  return tokenize_corpus(read_text_file(rc.data_path), rc.policy(),
                         {rc.train_frac, rc.valid_frac});
}

BaselineRun train_baseline(const RunConfig& rc, const Corpus& corpus) {
  std::mt19937_64 init_rng(rc.seed);
  BaselineRun out{AllAttModel(rc.model_config(corpus.vocab.size()), init_rng),
                  {},
                  {}};

  SegmentBatcher batcher(corpus.train, rc.seg_len, rc.lanes);
  Trainer trainer(out.model, nullptr, rc.schedule(), rc.optimizer_options(),
                  rc.lanes, rc.seed + 1, rc.trainer_options());
  for (int64_t step = 0; step < rc.steps; ++step) {
    if (batcher.wraps_at(step)) trainer.reset_memory();
    out.trace.push_back(trainer.train_step(batcher.batch(step)));
  }
  out.eval = evaluate(out.model, corpus.valid, rc.metric_kind());
  return out;
}

double prune_equivalence_error(const AllAttModel& gated, const GateSet& gates,
                               const AllAttModel& pruned,
                               const CorpusSplit& split, int64_t segments,
                               bool output_scaling) {
  const int64_t t = gated.config().seg_len;
  const int64_t avail = (static_cast<int64_t>(split.ids.size()) - 1) / t;
  const int64_t count = std::min(segments, avail);
  if (count <= 0)
    throw DataError("prune equivalence check: split too short");

  MemoryState mem_g = MemoryState::empty(gated.config().layers);
  MemoryState mem_p = MemoryState::empty(pruned.config().layers);

  GateValues gv;
  for (const auto& pi : gates.pi) {
    auto g = deterministic_gates(pi.data(), gates.hc);
    LayerGateValues lg;
    lg.scale = Tensor::scalar(output_scaling ? gate_scale_value(g) : 1.0);
    const int64_t h = static_cast<int64_t>(g.size());
    lg.g = Tensor::from_data({h}, std::move(g));
    gv.push_back(std::move(lg));
  }
  ForwardOptions og;
  og.gates = &gv;
  ForwardOptions op;  // pruned model runs ungated

  double max_err = 0.0;
  for (int64_t s = 0; s < count; ++s) {
    std::vector<int32_t> in(split.ids.begin() + s * t,
                            split.ids.begin() + (s + 1) * t);
    Tensor lg = gated.forward(in, mem_g, og);
    Tensor lp = pruned.forward(in, mem_p, op);
    for (int64_t i = 0; i < lg.size(); ++i) {
      const double a = lg.data()[i], b = lp.data()[i];
      const double err =
          std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

PruneRun run_prune(const RunConfig& rc, const Corpus& corpus,
                   const AllAttModel& baseline) {
  PruneRun out{baseline.clone(),
               GateSet::make(rc.layers, rc.heads, rc.effective_gate_init()),
               {},
               {},
               {},
               {},
               {},
               0.0};

  SegmentBatcher batcher(corpus.train, rc.seg_len, rc.lanes);
  Trainer trainer(out.gated_model, &out.gates, rc.schedule(),
                  rc.optimizer_options(), rc.lanes, rc.seed + 2,
                  rc.trainer_options());
  for (int64_t step = 0; step < rc.steps; ++step) {
    if (batcher.wraps_at(step)) trainer.reset_memory();
    out.trace.push_back(trainer.train_step(batcher.batch(step)));
  }

  out.gates.mode = GateMode::kFrozen;
  out.mask = extract_prune_mask(out.gates);
  out.pruned_model = apply_structural_prune(out.gated_model, out.mask,
                                            out.gates, !rc.no_output_scaling);
  out.max_equiv_rel_err = prune_equivalence_error(
      out.gated_model, out.gates, out.pruned_model, corpus.valid,
      /*segments=*/4, !rc.no_output_scaling);
  out.gated_eval = evaluate(out.gated_model, corpus.valid, rc.metric_kind(),
                            &out.gates, !rc.no_output_scaling);
  out.pruned_eval = evaluate(out.pruned_model, corpus.valid, rc.metric_kind());
  return out;
}

}  // namespace headlab
