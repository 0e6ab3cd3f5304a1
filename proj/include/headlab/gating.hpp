#ifndef HEADLAB_GATING_HPP_
#define HEADLAB_GATING_HPP_

#include <cstdint>
#include <random>
#include <vector>

#include "headlab/tensor.hpp"

namespace headlab {

// Hard-concrete (stretched-and-clamped binary concrete) distribution
// constants. gamma < 0 < 1 < zeta so exact 0/1 gates occur with nonzero
// probability.
struct HardConcreteConfig {
  double beta = 2.0 / 3.0;
  double gamma = -0.1;
  double zeta = 1.1;
  void validate() const;
};

enum class GateMode { kStochastic, kDeterministic, kFrozen };

// Per-layer trainable gate logits plus the values sampled for the current
// forward pass.
struct GateSet {
  std::vector<Tensor> pi;  // one length-H leaf per layer
  HardConcreteConfig hc;
  GateMode mode = GateMode::kStochastic;
  std::vector<std::vector<double>> last_sample;

  static GateSet make(int64_t layers, int64_t heads, double pi_init,
                      HardConcreteConfig hc = {});
  int64_t num_layers() const { return static_cast<int64_t>(pi.size()); }
  int64_t heads_per_layer() const { return pi.empty() ? 0 : pi[0].size(); }
};

// Reparameterized sample: u ~ U(0,1), s = sigmoid((log u - log(1-u) + pi)/beta),
// g = clamp(s*(zeta-gamma)+gamma, 0, 1). Differentiable wrt pi off the clamps.
Tensor sample_gates(const Tensor& pi, const HardConcreteConfig& hc,
                    std::mt19937_64& rng);

// Noise-free gate, binarized at 0.5: ghat = clamp(sigmoid(pi/beta)*(zeta-gamma)
// + gamma, 0, 1); 1 iff ghat > 0.5.
std::vector<double> deterministic_gates(const std::vector<double>& pi,
                                        const HardConcreteConfig& hc);

// P(stretched gate > 0) summed over gates: sum_i sigmoid(pi_i - beta*log(-gamma/zeta)).
Tensor expected_l0(const Tensor& pi, const HardConcreteConfig& hc);
double expected_l0_value(double pi, const HardConcreteConfig& hc);

// Probability that a sampled gate lands above 1/2, i.e. sigmoid(pi). This is
// the "gate opened" probability (0.88 at pi=2, 0.5 at pi=0).
double expected_open(double pi);

// s_g = min(H / sum(g), H); returns H when all gates are closed.
double gate_scale_value(const std::vector<double>& g);
Tensor gate_scale(const Tensor& g);  // graph version, same clip rule

// Sum of expected_l0 over all layers of the set.
Tensor sparsity_loss(const GateSet& gates);

// 1 - E[open gates]/(L*H), a soft progress metric.
double expected_sparsity(const GateSet& gates);

}  // namespace headlab

#endif  // HEADLAB_GATING_HPP_
