#include "headlab/trainer.hpp"

#include <cmath>
#include <iostream>

#include "headlab/errors.hpp"

namespace headlab {

int64_t PruneMask::pruned_heads() const {
  int64_t n = 0;
  for (const auto& layer : pruned)
    for (bool p : layer) n += p ? 1 : 0;
  return n;
}

int64_t PruneMask::total_heads() const {
  int64_t n = 0;
  for (const auto& layer : pruned) n += static_cast<int64_t>(layer.size());
  return n;
}

double PruneMask::sparsity() const {
  const int64_t total = total_heads();
  return total == 0 ? 0.0 : static_cast<double>(pruned_heads()) / total;
}

std::vector<int64_t> PruneMask::surviving_heads() const {
  std::vector<int64_t> out;
  out.reserve(pruned.size());
  for (const auto& layer : pruned) {
    int64_t n = 0;
    for (bool p : layer) n += p ? 0 : 1;
    out.push_back(n);
  }
  return out;
}

PruneMask extract_prune_mask(const GateSet& gates) {
  if (gates.mode == GateMode::kStochastic)
    throw StateError("extract_prune_mask: gates are still stochastic; freeze first");
  PruneMask mask;
  for (const auto& pi : gates.pi) {
    const auto g = deterministic_gates(pi.data(), gates.hc);
    std::vector<bool> layer(g.size());
    for (size_t i = 0; i < g.size(); ++i) layer[i] = g[i] == 0.0;
    mask.pruned.push_back(std::move(layer));
  }
  return mask;
}

double hard_sparsity(const GateSet& gates) {
  int64_t closed = 0, total = 0;
  for (const auto& pi : gates.pi) {
    for (double g : deterministic_gates(pi.data(), gates.hc)) {
      closed += g == 0.0 ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(closed) / total;
}

namespace {

// Copies per-head blocks of a d x (H*dh) column-partitioned matrix.
Tensor take_head_cols(const Tensor& w, const std::vector<int64_t>& keep,
                      int64_t dh, double row_scale = 1.0) {
  const int64_t rows = w.rows(), cols = static_cast<int64_t>(keep.size()) * dh;
  std::vector<double> out(static_cast<size_t>(rows * cols));
  for (int64_t r = 0; r < rows; ++r)
    for (size_t h = 0; h < keep.size(); ++h)
      for (int64_t c = 0; c < dh; ++c)
        out[r * cols + h * dh + c] =
            row_scale * w.data()[r * w.cols() + keep[h] * dh + c];
  return Tensor::from_data({rows, cols}, std::move(out), true);
}

// Copies per-head row blocks of an (H*block) x cols matrix.
Tensor take_head_rows(const Tensor& w, const std::vector<int64_t>& keep,
                      int64_t block, double scale = 1.0) {
  const int64_t cols = w.cols(), rows = static_cast<int64_t>(keep.size()) * block;
  std::vector<double> out(static_cast<size_t>(rows * cols));
  for (size_t h = 0; h < keep.size(); ++h)
    for (int64_t r = 0; r < block; ++r)
      for (int64_t c = 0; c < cols; ++c)
        out[(h * block + r) * cols + c] =
            scale * w.data()[(keep[h] * block + r) * cols + c];
  return Tensor::from_data({rows, cols}, std::move(out), true);
}

Tensor copy_param(const Tensor& t) {
  return Tensor::from_data(t.shape(), t.data(), true);
}

}  // namespace

AllAttModel apply_structural_prune(const AllAttModel& model,
                                   const PruneMask& mask,
                                   const GateSet& gates,
                                   bool output_scaling) {
  const ModelConfig& cfg = model.config();
  if (static_cast<int64_t>(mask.pruned.size()) != cfg.layers)
    throw DimensionError("apply_structural_prune: mask covers " +
                         std::to_string(mask.pruned.size()) +
                         " layers, model has " + std::to_string(cfg.layers));
  const int64_t dh = cfg.head_dim(), n = cfg.n_persist;
  if (gates.mode == GateMode::kStochastic)
    throw StateError("apply_structural_prune: gates are still stochastic");
  const bool scaling = output_scaling;

  std::vector<LayerParams> layers;
  layers.reserve(cfg.layers);
  for (int64_t l = 0; l < cfg.layers; ++l) {
    const LayerParams& lp = model.layers()[l];
    if (static_cast<int64_t>(mask.pruned[l].size()) != lp.heads)
      throw DimensionError("apply_structural_prune: mask layer " +
                           std::to_string(l) + " has " +
                           std::to_string(mask.pruned[l].size()) +
                           " entries for " + std::to_string(lp.heads) +
                           " heads");
    std::vector<int64_t> keep;
    for (int64_t i = 0; i < lp.heads; ++i)
      if (!mask.pruned[l][i]) keep.push_back(i);

    // s_g of the frozen gate pattern, absorbed into the surviving w_o rows.
    std::vector<double> g01(lp.heads, 0.0);
    for (int64_t i : keep) g01[i] = 1.0;
    const double sg = scaling ? gate_scale_value(g01) : 1.0;

    LayerParams np;
    np.heads = static_cast<int64_t>(keep.size());
    if (np.heads == 0)
      std::cerr << "warning: all heads pruned in layer " << l
                << "; layer degenerates to residual identity\n";
    np.w_q = take_head_cols(lp.w_q, keep, dh);
    np.w_k = take_head_cols(lp.w_k, keep, dh);
    np.w_v = take_head_cols(lp.w_v, keep, dh);
    np.w_r = take_head_cols(lp.w_r, keep, dh);
    np.w_o = take_head_rows(lp.w_o, keep, dh, sg);
    np.p_k = take_head_rows(lp.p_k, keep, n);
    np.p_v = take_head_rows(lp.p_v, keep, n);
    np.u_bias = take_head_rows(lp.u_bias, keep, 1);
    np.v_bias = take_head_rows(lp.v_bias, keep, 1);
    np.norm_q = {copy_param(lp.norm_q.gain), copy_param(lp.norm_q.bias)};
    np.norm_kv = {copy_param(lp.norm_kv.gain), copy_param(lp.norm_kv.bias)};
    layers.push_back(std::move(np));
  }

  return AllAttModel::from_parts(
      cfg, std::move(layers), copy_param(model.embed()),
      copy_param(model.out_proj()),
      {copy_param(model.final_norm().gain), copy_param(model.final_norm().bias)});
}

EvalResult evaluate(const AllAttModel& model, const CorpusSplit& split,
                    MetricKind kind, const GateSet* gates,
                    bool output_scaling) {
  const ModelConfig& cfg = model.config();
  const int64_t t = cfg.seg_len;
  if (static_cast<int64_t>(split.ids.size()) < t + 1)
    throw DataError("evaluate: split '" + split.name + "' of " +
                    std::to_string(split.ids.size()) +
                    " tokens is too short for segment length " +
                    std::to_string(t));

  GateValues gv;
  if (gates) {
    for (const auto& pi : gates->pi) {
      auto g = deterministic_gates(pi.data(), gates->hc);
      LayerGateValues lg;
      lg.scale =
          Tensor::scalar(output_scaling ? gate_scale_value(g) : 1.0);
      const int64_t h = static_cast<int64_t>(g.size());
      lg.g = Tensor::from_data({h}, std::move(g));
      gv.push_back(std::move(lg));
    }
  }

  ForwardOptions opts;
  opts.training = false;
  opts.gates = gates ? &gv : nullptr;

  MemoryState mem = MemoryState::empty(cfg.layers);
  double nll_sum = 0.0;
  int64_t tokens = 0;
  const int64_t segments = (static_cast<int64_t>(split.ids.size()) - 1) / t;
  for (int64_t s = 0; s < segments; ++s) {
    std::vector<int32_t> in(split.ids.begin() + s * t,
                            split.ids.begin() + (s + 1) * t);
    std::vector<int32_t> tgt(split.ids.begin() + s * t + 1,
                             split.ids.begin() + (s + 1) * t + 1);
    Tensor logits = model.forward(in, mem, opts);
    nll_sum += cross_entropy(logits, tgt).value() * t;
    tokens += t;
  }

  EvalResult r;
  r.tokens = tokens;
  r.mean_nll = nll_sum / tokens;
  r.metric = kind == MetricKind::kBpc ? r.mean_nll / std::log(2.0)
                                      : std::exp(r.mean_nll);
  return r;
}

Trainer::Trainer(AllAttModel& model, GateSet* gates,
                 const PruneSchedule& schedule, OptimizerOptions opt_opts,
                 int64_t lanes, uint64_t seed, TrainerOptions opts)
    : model_(model),
      gates_(gates),
      schedule_(schedule),
      opt_(opt_opts),
      opts_(opts),
      lanes_(lanes),
      rng_(seed) {
  for (auto& [name, t] : model_.named_parameters()) {
    const bool exempt = name.find("norm") != std::string::npos ||
                        name.find("_bias") != std::string::npos;
    opt_.add_param(name, t, exempt, false);
  }
  if (gates_) {
    for (int64_t l = 0; l < gates_->num_layers(); ++l)
      opt_.add_param("gates.layer" + std::to_string(l), gates_->pi[l],
                     /*decay_exempt=*/true, /*is_gate=*/true);
  }
  reset_memory();
}

void Trainer::reset_memory() {
  lane_mem_.assign(lanes_, MemoryState::empty(model_.config().layers));
}

GateValues Trainer::draw_gate_values(bool stochastic) {
  GateValues gv;
  for (int64_t l = 0; l < gates_->num_layers(); ++l) {
    LayerGateValues lg;
    if (stochastic) {
      lg.g = sample_gates(gates_->pi[l], gates_->hc, rng_);
      gates_->last_sample[l] = lg.g.data();
      lg.scale = opts_.output_scaling ? gate_scale(lg.g) : Tensor::scalar(1.0);
    } else {
      auto g = deterministic_gates(gates_->pi[l].data(), gates_->hc);
      gates_->last_sample[l] = g;
      lg.scale = Tensor::scalar(opts_.output_scaling ? gate_scale_value(g) : 1.0);
      const int64_t h = static_cast<int64_t>(g.size());
      lg.g = Tensor::from_data({h}, std::move(g));
    }
    gv.push_back(std::move(lg));
  }
  return gv;
}

TrainStepMetrics Trainer::train_step(
    const std::vector<SegmentBatcher::LaneSegment>& batch) {
  if (static_cast<int64_t>(batch.size()) != lanes_)
    throw DataError("train_step: batch has " + std::to_string(batch.size()) +
                    " lanes, trainer expects " + std::to_string(lanes_));

  const int64_t t = step_;
  const double lr = lr_at_step(std::min(t, schedule_.total_steps), schedule_);
  const double lambda = lambda_at_step(t, schedule_);
  const bool gates_trainable = gates_ && schedule_.gates_trainable_at(t);
  if (gates_) {
    gates_->mode = gates_trainable ? GateMode::kStochastic : GateMode::kFrozen;
  }

  // One gate sample per layer per pass, shared across lanes.
  GateValues gv;
  if (gates_) gv = draw_gate_values(gates_trainable);

  ForwardOptions fopts;
  fopts.training = true;
  fopts.rng = &rng_;
  fopts.gates = gates_ ? &gv : nullptr;

  Tensor nll_acc;
  for (int64_t lane = 0; lane < lanes_; ++lane) {
    Tensor logits = model_.forward(batch[lane].inputs, lane_mem_[lane], fopts);
    Tensor ce = cross_entropy(logits, batch[lane].targets);
    nll_acc = nll_acc.defined() ? add(nll_acc, ce) : ce;
  }
  Tensor nll = scale(nll_acc, 1.0 / lanes_);

  Tensor total = nll;
  Tensor sp;
  if (gates_) {
    sp = sparsity_loss(*gates_);
    total = add(total, scale(sp, lambda));
  }

  if (!std::isfinite(total.value()))
    throw NumericError("train_step: non-finite loss at step " +
                       std::to_string(t) + " (nll=" +
                       std::to_string(nll.value()) + ")");

  total.backward();
  opt_.clip_grad_norm(opts_.grad_clip_norm);
  opt_.step(lr, /*update_gates=*/gates_trainable);
  ++step_;

  TrainStepMetrics m;
  m.step = t;
  m.nll = nll.value();
  m.sparsity_loss = sp.defined() ? sp.value() : 0.0;
  m.lambda = lambda;
  m.lr = lr;
  m.expected_sparsity = gates_ ? expected_sparsity(*gates_) : 0.0;
  m.hard_sparsity = gates_ ? hard_sparsity(*gates_) : 0.0;
  return m;
}

}  // namespace headlab
