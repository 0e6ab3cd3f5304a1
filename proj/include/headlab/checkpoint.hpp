#ifndef HEADLAB_CHECKPOINT_HPP_
#define HEADLAB_CHECKPOINT_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "headlab/gating.hpp"
#include "headlab/model.hpp"
#include "headlab/optimizer.hpp"

namespace headlab {

// Container layout: u64 LE header length, JSON header, then raw f64 LE
// tensor payloads. Header: {format_version, config, tensors: name ->
// {dtype, shape, offset}} with offsets relative to the payload section.
struct Checkpoint {
  nlohmann::json config() const;

  static Checkpoint from_model(AllAttModel& model, const GateSet* gates,
                               Optimizer* opt);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  AllAttModel restore_model() const;
  std::optional<GateSet> restore_gates() const;
  void restore_optimizer(Optimizer& opt) const;

  bool has(const std::string& name) const { return tensors.count(name) > 0; }
  const std::vector<double>& payload(const std::string& name) const;
  const Shape& tensor_shape(const std::string& name) const;

  struct Entry {
    Shape shape;
    std::vector<double> data;
  };
  std::map<std::string, Entry> tensors;
  std::string config_json;  // serialized ModelConfig + heads_per_layer + hc
};

}  // namespace headlab

#endif  // HEADLAB_CHECKPOINT_HPP_
