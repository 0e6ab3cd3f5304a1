#include "headlab/model.hpp"

#include <cmath>
#include <cstring>

#include "headlab/errors.hpp"

namespace headlab {

namespace {

constexpr double kMaskValue = -1e30;

Tensor make_norm_input(const Tensor& x, const NormParams& np) {
  return layernorm(x, np.gain, np.bias);
}

}  // namespace

void ModelConfig::validate() const {
  if (d <= 0 || heads <= 0 || layers <= 0 || seg_len <= 0 || vocab <= 0)
    throw DimensionError("model config: d, heads, layers, seg_len, vocab must be positive");
  if (n_persist < 0 || mem_len < 0)
    throw DimensionError("model config: n_persist and mem_len must be non-negative");
  if (d % heads != 0)
    throw DimensionError("model config: d=" + std::to_string(d) +
                         " not divisible by heads=" + std::to_string(heads));
}

void init_trunc_normal(Tensor& t, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, sigma);
  for (double& x : t.data()) {
    double v = dist(rng);
    while (std::abs(v) > 2.0 * sigma) v = dist(rng);
    x = v;
  }
}

Tensor relative_encoding(int64_t num_pos, int64_t d) {
  std::vector<double> data(static_cast<size_t>(num_pos * d));
  for (int64_t r = 0; r < num_pos; ++r) {
    for (int64_t i = 0; i < d / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / d);
      data[r * d + 2 * i] = std::sin(r * freq);
      data[r * d + 2 * i + 1] = std::cos(r * freq);
    }
    if (d % 2 != 0) data[r * d + d - 1] = std::sin(r * std::pow(10000.0, -1.0));
  }
  return Tensor::from_data({num_pos, d}, std::move(data));
}

Tensor head_attention(const HeadAttentionInputs& in, double dropout_p,
                      std::mt19937_64* rng, bool training) {
  const int64_t t = in.q.rows();
  const int64_t dh = in.q.cols();
  const int64_t sk = in.k.rows();
  const int64_t s = in.mem_len;
  const int64_t n = in.pk.defined() ? in.pk.rows() : 0;
  if (sk != s + t)
    throw DimensionError("head_attention: keys " + shape_str(in.k.shape()) +
                         " do not cover mem+segment length " +
                         std::to_string(s + t));
  if (in.k.cols() != dh || in.v.cols() != dh)
    throw DimensionError("head_attention: head dim mismatch, q " +
                         shape_str(in.q.shape()) + " vs k " +
                         shape_str(in.k.shape()));

  Tensor kcat = n > 0 ? concat_rows(in.k, in.pk) : in.k;
  Tensor vcat = n > 0 ? concat_rows(in.v, in.pv) : in.v;

  Tensor content = matmul_nt(add_rowvec(in.q, in.u), kcat);
  Tensor pos = rel_shift_pad(matmul_nt(add_rowvec(in.q, in.vbias), in.r), s, n);
  Tensor logits = scale(add(content, pos), 1.0 / std::sqrt(double(dh)));

  // Causal mask over [X, M]; persistent slots are never masked.
  std::vector<double> mask(static_cast<size_t>(t * (sk + n)), 0.0);
  for (int64_t q = 0; q < t; ++q)
    for (int64_t j = s + q + 1; j < sk; ++j) mask[q * (sk + n) + j] = kMaskValue;
  logits = add_constant(logits, mask);

  Tensor probs = softmax_lastdim(logits);
  if (training && dropout_p > 0.0) probs = dropout(probs, dropout_p, *rng, true);
  return matmul(probs, vcat);
}

AllAttModel::AllAttModel(ModelConfig cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  const int64_t d = cfg_.d, dh = cfg_.head_dim(), h = cfg_.heads,
                n = cfg_.n_persist;
  const double sigma = 0.02;

  embed_ = Tensor::zeros({cfg_.vocab, d}, true);
  out_proj_ = Tensor::zeros({d, cfg_.vocab}, true);
  init_trunc_normal(embed_, sigma, rng);
  init_trunc_normal(out_proj_, sigma, rng);
  final_norm_ = {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};

  layers_.resize(cfg_.layers);
  for (auto& lp : layers_) {
    lp.heads = h;
    lp.w_q = Tensor::zeros({d, h * dh}, true);
    lp.w_k = Tensor::zeros({d, h * dh}, true);
    lp.w_v = Tensor::zeros({d, h * dh}, true);
    lp.w_r = Tensor::zeros({d, h * dh}, true);
    lp.w_o = Tensor::zeros({h * dh, d}, true);
    lp.p_k = Tensor::zeros({h * n, dh}, true);
    lp.p_v = Tensor::zeros({h * n, dh}, true);
    lp.u_bias = Tensor::zeros({h, dh}, true);
    lp.v_bias = Tensor::zeros({h, dh}, true);
    for (Tensor* t : {&lp.w_q, &lp.w_k, &lp.w_v, &lp.w_r, &lp.w_o, &lp.p_k,
                      &lp.p_v, &lp.u_bias, &lp.v_bias})
      init_trunc_normal(*t, sigma, rng);
    lp.norm_q = {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
    lp.norm_kv = {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
  }
}

AllAttModel AllAttModel::from_parts(ModelConfig cfg,
                                    std::vector<LayerParams> layers,
                                    Tensor embed, Tensor out_proj,
                                    NormParams final_norm) {
  AllAttModel m;
  m.cfg_ = cfg;
  m.layers_ = std::move(layers);
  m.embed_ = std::move(embed);
  m.out_proj_ = std::move(out_proj);
  m.final_norm_ = std::move(final_norm);
  return m;
}

AllAttModel AllAttModel::clone() const {
  auto cp = [](const Tensor& t) {
    return Tensor::from_data(t.shape(), t.data(), t.requires_grad());
  };
  AllAttModel m;
  m.cfg_ = cfg_;
  m.embed_ = cp(embed_);
  m.out_proj_ = cp(out_proj_);
  m.final_norm_ = {cp(final_norm_.gain), cp(final_norm_.bias)};
  m.layers_.reserve(layers_.size());
  for (const auto& lp : layers_) {
    LayerParams np;
    np.heads = lp.heads;
    np.w_q = cp(lp.w_q);
    np.w_k = cp(lp.w_k);
    np.w_v = cp(lp.w_v);
    np.w_r = cp(lp.w_r);
    np.w_o = cp(lp.w_o);
    np.p_k = cp(lp.p_k);
    np.p_v = cp(lp.p_v);
    np.u_bias = cp(lp.u_bias);
    np.v_bias = cp(lp.v_bias);
    np.norm_q = {cp(lp.norm_q.gain), cp(lp.norm_q.bias)};
    np.norm_kv = {cp(lp.norm_kv.gain), cp(lp.norm_kv.bias)};
    m.layers_.push_back(std::move(np));
  }
  return m;
}

Tensor AllAttModel::layer_forward(const Tensor& x,
                                  const std::vector<double>& mem_rows,
                                  int64_t mem_len, int64_t layer_idx,
                                  const ForwardOptions& opts,
                                  std::vector<double>* new_mem) const {
  const LayerParams& lp = layers_[layer_idx];
  const int64_t t = x.rows(), d = cfg_.d, dh = cfg_.head_dim();
  const int64_t n = cfg_.n_persist;

  Tensor cat = x;
  if (mem_len > 0) {
    Tensor mem_t = Tensor::from_data(
        {mem_len, d},
        std::vector<double>(mem_rows.begin(), mem_rows.begin() + mem_len * d));
    cat = concat_rows(mem_t, x);
  }

  if (new_mem && cfg_.mem_len > 0) {
    const int64_t keep = std::min<int64_t>(cfg_.mem_len, mem_len + t);
    const auto& cd = cat.data();
    new_mem->assign(cd.end() - keep * d, cd.end());
  }

  if (lp.heads == 0 || opts.zero_attention) return x;  // residual identity

  Tensor q_in = make_norm_input(x, lp.norm_q);
  Tensor kv_in = make_norm_input(cat, lp.norm_kv);

  Tensor qf = matmul(q_in, lp.w_q);
  Tensor kf = matmul(kv_in, lp.w_k);
  Tensor vf = matmul(kv_in, lp.w_v);
  Tensor rf = matmul(relative_encoding(mem_len + t, d), lp.w_r);

  const GateValues* gv = opts.gates;
  if (gv && (*gv)[layer_idx].g.size() != lp.heads)
    throw DimensionError("layer_forward: gate vector of size " +
                         std::to_string((*gv)[layer_idx].g.size()) +
                         " for a layer with " + std::to_string(lp.heads) +
                         " heads");

  Tensor head_sum;
  for (int64_t i = 0; i < lp.heads; ++i) {
    HeadAttentionInputs hin;
    hin.q = slice_cols(qf, i * dh, dh);
    hin.k = slice_cols(kf, i * dh, dh);
    hin.v = slice_cols(vf, i * dh, dh);
    hin.r = slice_cols(rf, i * dh, dh);
    hin.pk = slice_rows(lp.p_k, i * n, n);
    hin.pv = slice_rows(lp.p_v, i * n, n);
    hin.u = reshape(slice_rows(lp.u_bias, i, 1), {dh});
    hin.vbias = reshape(slice_rows(lp.v_bias, i, 1), {dh});
    hin.mem_len = mem_len;
    Tensor hi = head_attention(hin, cfg_.dropout_att, opts.rng, opts.training);
    Tensor oi = matmul(hi, slice_rows(lp.w_o, i * dh, dh));
    if (gv) oi = scale_by(oi, select((*gv)[layer_idx].g, i));
    head_sum = head_sum.defined() ? add(head_sum, oi) : oi;
  }
  Tensor out = gv ? scale_by(head_sum, (*gv)[layer_idx].scale) : head_sum;
  if (opts.training && cfg_.dropout_hidden > 0.0)
    out = dropout(out, cfg_.dropout_hidden, *opts.rng, true);
  return add(x, out);
}

Tensor AllAttModel::forward(const std::vector<int32_t>& tokens,
                            MemoryState& mem, const ForwardOptions& opts) const {
  if (opts.training && opts.rng == nullptr)
    throw StateError("forward: training mode requires an rng");
  if (mem.layers.size() != static_cast<size_t>(cfg_.layers))
    throw DimensionError("forward: memory has " +
                         std::to_string(mem.layers.size()) + " layers, model " +
                         std::to_string(cfg_.layers));
  if (opts.gates && static_cast<int64_t>(opts.gates->size()) != cfg_.layers)
    throw DimensionError("forward: gate values for " +
                         std::to_string(opts.gates->size()) + " layers");

  Tensor h = embedding(embed_, tokens);
  if (opts.training && cfg_.dropout_emb > 0.0)
    h = dropout(h, cfg_.dropout_emb, *opts.rng, true);

  const int64_t t = static_cast<int64_t>(tokens.size());
  std::vector<std::vector<double>> new_mem(cfg_.layers);
  for (int64_t l = 0; l < cfg_.layers; ++l)
    h = layer_forward(h, mem.layers[l], mem.len, l, opts, &new_mem[l]);

  if (cfg_.mem_len > 0) {
    mem.layers = std::move(new_mem);
    mem.len = std::min<int64_t>(cfg_.mem_len, mem.len + t);
  }

  h = layernorm(h, final_norm_.gain, final_norm_.bias);
  return matmul(h, out_proj_);
}

std::vector<std::pair<std::string, Tensor>> AllAttModel::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed", embed_);
  out.emplace_back("out_proj", out_proj_);
  out.emplace_back("final_norm.gain", final_norm_.gain);
  out.emplace_back("final_norm.bias", final_norm_.bias);
  for (size_t l = 0; l < layers_.size(); ++l) {
    auto& lp = layers_[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    out.emplace_back(p + "w_q", lp.w_q);
    out.emplace_back(p + "w_k", lp.w_k);
    out.emplace_back(p + "w_v", lp.w_v);
    out.emplace_back(p + "w_r", lp.w_r);
    out.emplace_back(p + "w_o", lp.w_o);
    out.emplace_back(p + "p_k", lp.p_k);
    out.emplace_back(p + "p_v", lp.p_v);
    out.emplace_back(p + "u_bias", lp.u_bias);
    out.emplace_back(p + "v_bias", lp.v_bias);
    out.emplace_back(p + "norm_q.gain", lp.norm_q.gain);
    out.emplace_back(p + "norm_q.bias", lp.norm_q.bias);
    out.emplace_back(p + "norm_kv.gain", lp.norm_kv.gain);
    out.emplace_back(p + "norm_kv.bias", lp.norm_kv.bias);
  }
  return out;
}

int64_t AllAttModel::accounted_param_count() const {
  int64_t total = 0;
  for (const auto& lp : layers_)
    total += lp.w_q.size() + lp.w_k.size() + lp.w_v.size() + lp.w_r.size() +
             lp.w_o.size() + lp.p_k.size() + lp.p_v.size();
  return total;
}

int64_t AllAttModel::total_param_count() const {
  int64_t total = embed_.size() + out_proj_.size() + final_norm_.gain.size() +
                  final_norm_.bias.size();
  for (const auto& lp : layers_)
    total += lp.w_q.size() + lp.w_k.size() + lp.w_v.size() + lp.w_r.size() +
             lp.w_o.size() + lp.p_k.size() + lp.p_v.size() + lp.u_bias.size() +
             lp.v_bias.size() + lp.norm_q.gain.size() + lp.norm_q.bias.size() +
             lp.norm_kv.gain.size() + lp.norm_kv.bias.size();
  return total;
}

std::vector<int64_t> AllAttModel::heads_per_layer() const {
  std::vector<int64_t> out;
  out.reserve(layers_.size());
  for (const auto& lp : layers_) out.push_back(lp.heads);
  return out;
}

}  // namespace headlab
