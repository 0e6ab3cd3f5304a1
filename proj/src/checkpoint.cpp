#include "headlab/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "headlab/errors.hpp"

namespace headlab {

using nlohmann::json;

namespace {

constexpr uint32_t kFormatVersion = 1;

json config_to_json(const ModelConfig& c, const std::vector<int64_t>& heads,
                    const GateSet* gates) {
  json j;
  j["d"] = c.d;
  j["heads"] = c.heads;
  j["n_persist"] = c.n_persist;
  j["layers"] = c.layers;
  j["seg_len"] = c.seg_len;
  j["mem_len"] = c.mem_len;
  j["vocab"] = c.vocab;
  j["dropout_att"] = c.dropout_att;
  j["dropout_emb"] = c.dropout_emb;
  j["dropout_hidden"] = c.dropout_hidden;
  j["heads_per_layer"] = heads;
  if (gates) {
    j["hard_concrete"] = {{"beta", gates->hc.beta},
                          {"gamma", gates->hc.gamma},
                          {"zeta", gates->hc.zeta}};
  }
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d = j.at("d");
  c.heads = j.at("heads");
  c.n_persist = j.at("n_persist");
  c.layers = j.at("layers");
  c.seg_len = j.at("seg_len");
  c.mem_len = j.at("mem_len");
  c.vocab = j.at("vocab");
  c.dropout_att = j.value("dropout_att", 0.0);
  c.dropout_emb = j.value("dropout_emb", 0.0);
  c.dropout_hidden = j.value("dropout_hidden", 0.0);
  return c;
}

}  // namespace

json Checkpoint::config() const { return json::parse(config_json); }

Checkpoint Checkpoint::from_model(AllAttModel& model, const GateSet* gates,
                                  Optimizer* opt) {
  Checkpoint ck;
  for (auto& [name, t] : model.named_parameters())
    ck.tensors[name] = Entry{t.shape(), t.data()};
  if (gates) {
    for (int64_t l = 0; l < gates->num_layers(); ++l) {
      const Tensor& pi = gates->pi[l];
      ck.tensors["gates.layer" + std::to_string(l)] =
          Entry{pi.shape(), pi.data()};
    }
  }
  if (opt) {
    for (auto& s : opt->slots()) {
      if (s.state.m.empty()) continue;
      ck.tensors["opt." + s.name + ".m"] = Entry{s.param.shape(), s.state.m};
      ck.tensors["opt." + s.name + ".v"] = Entry{s.param.shape(), s.state.v};
    }
    ck.tensors["opt.step"] =
        Entry{{1}, {static_cast<double>(opt->step_count())}};
  }
  ck.config_json =
      config_to_json(model.config(), model.heads_per_layer(), gates).dump();
  return ck;
}

void Checkpoint::save(const std::string& path) const {
  json header;
  header["format_version"] = kFormatVersion;
  header["config"] = json::parse(config_json);
  json index = json::object();
  uint64_t offset = 0;
  for (const auto& [name, e] : tensors) {
    index[name] = {{"dtype", "f64"}, {"shape", e.shape}, {"offset", offset}};
    offset += e.data.size() * sizeof(double);
  }
  header["tensors"] = index;
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot write " + path);
  const uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, e] : tensors)
    f.write(reinterpret_cast<const char*>(e.data.data()),
            static_cast<std::streamsize>(e.data.size() * sizeof(double)));
  if (!f) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open " + path);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw DataError("checkpoint: truncated header in " + path);
  json header = json::parse(hs);
  if (header.at("format_version").get<uint32_t>() != kFormatVersion)
    throw DataError("checkpoint: unsupported format version in " + path);

  Checkpoint ck;
  ck.config_json = header.at("config").dump();
  const std::streampos payload_start = f.tellg();
  for (auto& [name, meta] : header.at("tensors").items()) {
    Entry e;
    e.shape = meta.at("shape").get<Shape>();
    if (meta.at("dtype").get<std::string>() != "f64")
      throw DataError("checkpoint: unsupported dtype for tensor " + name);
    int64_t count = 1;
    for (int64_t s : e.shape) count *= s;
    e.data.resize(count);
    f.seekg(payload_start + std::streampos(meta.at("offset").get<uint64_t>()));
    f.read(reinterpret_cast<char*>(e.data.data()),
           static_cast<std::streamsize>(count * sizeof(double)));
    if (!f) throw DataError("checkpoint: truncated payload for tensor " + name);
    ck.tensors[name] = std::move(e);
  }
  return ck;
}

const std::vector<double>& Checkpoint::payload(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw DataError("checkpoint: missing tensor " + name);
  return it->second.data;
}

const Shape& Checkpoint::tensor_shape(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw DataError("checkpoint: missing tensor " + name);
  return it->second.shape;
}

AllAttModel Checkpoint::restore_model() const {
  const json cj = config();
  ModelConfig cfg = config_from_json(cj);
  std::vector<int64_t> heads =
      cj.value("heads_per_layer", std::vector<int64_t>(cfg.layers, cfg.heads));

  auto tensor_of = [&](const std::string& name) {
    const Entry& e = tensors.at(name);
    return Tensor::from_data(e.shape, e.data, true);
  };

  std::vector<LayerParams> layers(cfg.layers);
  for (int64_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerParams& lp = layers[l];
    lp.heads = heads[l];
    lp.w_q = tensor_of(p + "w_q");
    lp.w_k = tensor_of(p + "w_k");
    lp.w_v = tensor_of(p + "w_v");
    lp.w_r = tensor_of(p + "w_r");
    lp.w_o = tensor_of(p + "w_o");
    lp.p_k = tensor_of(p + "p_k");
    lp.p_v = tensor_of(p + "p_v");
    lp.u_bias = tensor_of(p + "u_bias");
    lp.v_bias = tensor_of(p + "v_bias");
    lp.norm_q = {tensor_of(p + "norm_q.gain"), tensor_of(p + "norm_q.bias")};
    lp.norm_kv = {tensor_of(p + "norm_kv.gain"), tensor_of(p + "norm_kv.bias")};
  }
  return AllAttModel::from_parts(
      cfg, std::move(layers), tensor_of("embed"), tensor_of("out_proj"),
      {tensor_of("final_norm.gain"), tensor_of("final_norm.bias")});
}

std::optional<GateSet> Checkpoint::restore_gates() const {
  const json cj = config();
  if (!has("gates.layer0")) return std::nullopt;
  GateSet g;
  if (cj.contains("hard_concrete")) {
    g.hc.beta = cj["hard_concrete"]["beta"];
    g.hc.gamma = cj["hard_concrete"]["gamma"];
    g.hc.zeta = cj["hard_concrete"]["zeta"];
  }
  const int64_t layers = cj.at("layers");
  for (int64_t l = 0; l < layers; ++l) {
    const std::string name = "gates.layer" + std::to_string(l);
    const Entry& e = tensors.at(name);
    g.pi.push_back(Tensor::from_data(e.shape, e.data, true));
    g.last_sample.emplace_back(e.data.size(), 1.0);
  }
  return g;
}

void Checkpoint::restore_optimizer(Optimizer& opt) const {
  for (auto& s : opt.slots()) {
    const std::string mk = "opt." + s.name + ".m";
    if (!has(mk)) continue;
    s.state.m = payload(mk);
    s.state.v = payload("opt." + s.name + ".v");
  }
  if (has("opt.step"))
    opt.set_step_count(static_cast<int64_t>(payload("opt.step")[0]));
}

}  // namespace headlab
