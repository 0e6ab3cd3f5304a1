#include "headlab/optimizer.hpp"

#include <cmath>

#include "headlab/errors.hpp"

namespace headlab {

void lamb_update(Tensor& param, const std::vector<double>& grad,
                 MomentBuffers& state, int64_t step_count, double lr,
                 const OptimizerOptions& opts, bool decay_exempt) {
  const size_t n = param.data().size();
  if (grad.size() != n)
    throw DimensionError("lamb_update: grad size " +
                         std::to_string(grad.size()) + " vs param " +
                         std::to_string(n));
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  const double bc1 = 1.0 - std::pow(opts.beta1, step_count);
  const double bc2 = 1.0 - std::pow(opts.beta2, step_count);
  const double wd = decay_exempt ? 0.0 : opts.weight_decay;

  std::vector<double> update(n);
  double pnorm = 0.0, unorm = 0.0;
  for (size_t i = 0; i < n; ++i) {
    state.m[i] = opts.beta1 * state.m[i] + (1.0 - opts.beta1) * grad[i];
    state.v[i] = opts.beta2 * state.v[i] + (1.0 - opts.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    update[i] = mhat / (std::sqrt(vhat) + opts.eps) + wd * param.data()[i];
    pnorm += param.data()[i] * param.data()[i];
    unorm += update[i] * update[i];
  }
  pnorm = std::sqrt(pnorm);
  unorm = std::sqrt(unorm);

  double trust = 1.0;
  if (opts.variant == OptVariant::kLamb && pnorm > 0.0 && unorm > 0.0)
    trust = std::min(opts.trust_max, std::max(opts.trust_min, pnorm / unorm));

  for (size_t i = 0; i < n; ++i) param.data()[i] -= lr * trust * update[i];
}

void Optimizer::add_param(const std::string& name, Tensor param,
                          bool decay_exempt, bool is_gate) {
  slots_.push_back(Slot{name, std::move(param), decay_exempt, is_gate, {}});
}

double Optimizer::clip_grad_norm(double max_norm) {
  double total = 0.0;
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    for (double g : s.param.grad()) total += g * g;
  }
  total = std::sqrt(total);
  if (total > max_norm && total > 0.0) {
    const double scale = max_norm / total;
    for (auto& s : slots_) {
      if (!s.param.has_grad()) continue;
      for (double& g : s.param.grad()) g *= scale;
    }
  }
  return total;
}

void Optimizer::step(double lr, bool update_gates) {
  ++step_count_;
  for (auto& s : slots_) {
    if (s.is_gate && !update_gates) continue;
    if (!s.param.has_grad()) continue;
    lamb_update(s.param, s.param.grad(), s.state, step_count_, lr, opts_,
                s.decay_exempt);
  }
  zero_grads();
}

void Optimizer::zero_grads() {
  for (auto& s : slots_) s.param.zero_grad();
}

}  // namespace headlab
