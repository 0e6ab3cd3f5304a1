#ifndef HEADLAB_MODEL_HPP_
#define HEADLAB_MODEL_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "headlab/gating.hpp"
#include "headlab/tensor.hpp"

namespace headlab {

struct ModelConfig {
  int64_t d = 512;       // model dim
  int64_t heads = 8;     // heads per layer (nominal, before pruning)
  int64_t n_persist = 2048;
  int64_t layers = 16;
  int64_t seg_len = 192;  // T
  int64_t mem_len = 192;  // S
  int64_t vocab = 0;
  double dropout_att = 0.2;
  double dropout_emb = 0.1;
  double dropout_hidden = 0.1;

  int64_t head_dim() const { return d / heads; }
  void validate() const;
};

struct NormParams {
  Tensor gain, bias;
};

// One All-att layer. `heads` may drop below the nominal count after
// structural pruning; head i owns columns [i*d_h, (i+1)*d_h) of the
// projections (rows, for w_o) and rows [i*N, (i+1)*N) of p_k / p_v.
struct LayerParams {
  int64_t heads = 0;
  Tensor w_q, w_k, w_v, w_r;  // d x heads*d_h
  Tensor w_o;                 // heads*d_h x d
  Tensor p_k, p_v;            // heads*N x d_h
  Tensor u_bias, v_bias;      // heads x d_h content / position biases
  NormParams norm_q, norm_kv;
};

// Per-layer cached hidden states from the previous segment, detached from
// the graph by construction (raw buffers, never tensors with grads).
struct MemoryState {
  std::vector<std::vector<double>> layers;  // each len x d, row-major
  int64_t len = 0;

  static MemoryState empty(int64_t num_layers) {
    MemoryState m;
    m.layers.assign(num_layers, {});
    return m;
  }
};

// Gate values for one forward pass, produced by the gating module.
struct LayerGateValues {
  Tensor g;      // length = layer heads, values in [0,1]
  Tensor scale;  // scalar s_g
};
using GateValues = std::vector<LayerGateValues>;

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training
  const GateValues* gates = nullptr;
  bool zero_attention = false;  // test hook: drop every attention branch
};

// Single attention head over [K, P^K] / [V, P^V] with TXL-style relative
// positions on the input-derived slots only.
struct HeadAttentionInputs {
  Tensor q;        // T x d_h
  Tensor k, v;     // (S+T) x d_h
  Tensor pk, pv;   // N x d_h (N may be 0)
  Tensor r;        // (S+T) x d_h relative keys, row index = distance
  Tensor u, vbias; // d_h content / position biases
  int64_t mem_len = 0;
};
Tensor head_attention(const HeadAttentionInputs& in, double dropout_p = 0.0,
                      std::mt19937_64* rng = nullptr, bool training = false);

// Sinusoidal distance encodings, row r = distance r, shape num_pos x d.
Tensor relative_encoding(int64_t num_pos, int64_t d);

class AllAttModel {
 public:
  AllAttModel() = default;
  AllAttModel(ModelConfig cfg, std::mt19937_64& rng);

  const ModelConfig& config() const { return cfg_; }
  std::vector<LayerParams>& layers() { return layers_; }
  const std::vector<LayerParams>& layers() const { return layers_; }
  Tensor& embed() { return embed_; }
  Tensor& out_proj() { return out_proj_; }
  NormParams& final_norm() { return final_norm_; }
  const Tensor& embed() const { return embed_; }
  const Tensor& out_proj() const { return out_proj_; }
  const NormParams& final_norm() const { return final_norm_; }

  // Pre-norm residual stack over one segment; advances `mem` (detached).
  Tensor forward(const std::vector<int32_t>& tokens, MemoryState& mem,
                 const ForwardOptions& opts = {}) const;

  // One layer over x given that layer's cached memory rows. Writes the next
  // segment's cache (last mem_len rows of [mem, x]) into *new_mem when given.
  Tensor layer_forward(const Tensor& x, const std::vector<double>& mem_rows,
                       int64_t mem_len, int64_t layer_idx,
                       const ForwardOptions& opts,
                       std::vector<double>* new_mem = nullptr) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters();
  // Head-partitioned weights only (projections + persistent vectors); the
  // quantity the cost model accounts for.
  int64_t accounted_param_count() const;
  int64_t total_param_count() const;
  std::vector<int64_t> heads_per_layer() const;

  // Deep copy with fresh leaf tensors (no shared graph state).
  AllAttModel clone() const;

  // Rebuilds a model from explicit parts (checkpoint load / pruning).
  static AllAttModel from_parts(ModelConfig cfg, std::vector<LayerParams> layers,
                                Tensor embed, Tensor out_proj,
                                NormParams final_norm);

 private:
  ModelConfig cfg_;
  Tensor embed_;     // V x d
  Tensor out_proj_;  // d x V
  NormParams final_norm_;
  std::vector<LayerParams> layers_;
};

// Truncated-normal init helper (mean 0, stddev sigma, cut at 2 sigma).
void init_trunc_normal(Tensor& t, double sigma, std::mt19937_64& rng);

}  // namespace headlab

#endif  // HEADLAB_MODEL_HPP_
