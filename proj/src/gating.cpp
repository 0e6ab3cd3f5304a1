#include "headlab/gating.hpp"

#include <cmath>

#include "headlab/errors.hpp"

namespace headlab {

namespace {

double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void HardConcreteConfig::validate() const {
  if (!(gamma < 0.0 && zeta > 1.0))
    throw StateError("hard-concrete stretch must satisfy gamma < 0 < 1 < zeta");
  if (!(beta > 0.0 && beta <= 1.0))
    throw StateError("hard-concrete temperature must be in (0, 1]");
}

GateSet GateSet::make(int64_t layers, int64_t heads, double pi_init,
                      HardConcreteConfig hc) {
  hc.validate();
  GateSet g;
  g.hc = hc;
  g.pi.reserve(layers);
  for (int64_t l = 0; l < layers; ++l)
    g.pi.push_back(Tensor::full({heads}, pi_init, true));
  g.last_sample.assign(layers, std::vector<double>(heads, 1.0));
  return g;
}

Tensor sample_gates(const Tensor& pi, const HardConcreteConfig& hc,
                    std::mt19937_64& rng) {
  const int64_t h = pi.size();
  const double span = hc.zeta - hc.gamma;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> out(h), dgdpi(h);
  for (int64_t i = 0; i < h; ++i) {
    double u = uni(rng);
    while (u <= 0.0 || u >= 1.0) u = uni(rng);  // keep logit(u) finite
    const double s =
        sigmoid_d((std::log(u) - std::log1p(-u) + pi.data()[i]) / hc.beta);
    const double stretched = s * span + hc.gamma;
    if (stretched <= 0.0) {
      out[i] = 0.0;
      dgdpi[i] = 0.0;
    } else if (stretched >= 1.0) {
      out[i] = 1.0;
      dgdpi[i] = 0.0;
    } else {
      out[i] = stretched;
      dgdpi[i] = s * (1.0 - s) * span / hc.beta;
    }
  }
  if (!pi.requires_grad()) return Tensor::from_data({h}, std::move(out));
  auto pn = pi.node();
  auto g = Tensor::from_data({h}, out, false);
  // Hand-rolled node: reuse add_constant-style plumbing via mul with a
  // constant derivative is not expressible with the generic ops, so attach
  // the backward directly.
  auto node = g.node();
  node->requires_grad = true;
  node->parents.push_back(pn);
  detail::TensorNode* self = node.get();
  node->backward_fn = [self, pn, dgdpi = std::move(dgdpi)]() {
    pn->ensure_grad();
    for (size_t i = 0; i < dgdpi.size(); ++i)
      pn->grad[i] += self->grad[i] * dgdpi[i];
  };
  return g;
}

std::vector<double> deterministic_gates(const std::vector<double>& pi,
                                        const HardConcreteConfig& hc) {
  // ghat > 1/2 with ghat = clamp(sigmoid(pi/beta)*span + gamma) is
  // algebraically pi > beta*logit((1/2-gamma)/span); comparing in logit space
  // keeps the boundary exact (pi = 0 closes the gate for the defaults).
  double threshold =
      hc.beta * (std::log(0.5 - hc.gamma) - std::log(hc.zeta - 0.5));
  // The default stretch is symmetric about 1/2; snap rounding noise so the
  // boundary sits exactly at pi = 0 (boundary itself counts as closed).
  if (std::abs(threshold) < 1e-12) threshold = 0.0;
  std::vector<double> g(pi.size());
  for (size_t i = 0; i < pi.size(); ++i)
    g[i] = pi[i] > threshold ? 1.0 : 0.0;
  return g;
}

double expected_l0_value(double pi, const HardConcreteConfig& hc) {
  return sigmoid_d(pi - hc.beta * std::log(-hc.gamma / hc.zeta));
}

Tensor expected_l0(const Tensor& pi, const HardConcreteConfig& hc) {
  const double offset = hc.beta * std::log(-hc.gamma / hc.zeta);
  const int64_t h = pi.size();
  double acc = 0.0;
  std::vector<double> dpi(h);
  for (int64_t i = 0; i < h; ++i) {
    const double s = sigmoid_d(pi.data()[i] - offset);
    acc += s;
    dpi[i] = s * (1.0 - s);
  }
  if (!pi.requires_grad()) return Tensor::scalar(acc);
  auto out = Tensor::scalar(acc);
  auto pn = pi.node();
  auto node = out.node();
  node->requires_grad = true;
  node->parents.push_back(pn);
  detail::TensorNode* self = node.get();
  node->backward_fn = [self, pn, dpi = std::move(dpi)]() {
    pn->ensure_grad();
    for (size_t i = 0; i < dpi.size(); ++i)
      pn->grad[i] += self->grad[0] * dpi[i];
  };
  return out;
}

double expected_open(double pi) { return sigmoid_d(pi); }

double gate_scale_value(const std::vector<double>& g) {
  const double h = static_cast<double>(g.size());
  double s = 0.0;
  for (double x : g) s += x;
  if (s <= 1.0) return h;  // covers the all-closed case and caps at H
  return h / s;
}

Tensor gate_scale(const Tensor& g) {
  if (g.shape().size() != 1)
    throw DimensionError("gate_scale: expected 1-d gate vector, got " +
                         shape_str(g.shape()));
  const double h = static_cast<double>(g.size());
  double total = 0.0;
  for (double x : g.data()) total += x;
  const bool clipped = total <= 1.0;  // s_g hits the H ceiling
  const double value = clipped ? h : h / total;
  if (!g.requires_grad()) return Tensor::scalar(value);
  auto out = Tensor::scalar(value);
  auto gn = g.node();
  auto node = out.node();
  node->requires_grad = true;
  node->parents.push_back(gn);
  detail::TensorNode* self = node.get();
  const double dsum = clipped ? 0.0 : -h / (total * total);
  node->backward_fn = [self, gn, dsum]() {
    gn->ensure_grad();
    for (double& gr : gn->grad) gr += self->grad[0] * dsum;
  };
  return out;
}

Tensor sparsity_loss(const GateSet& gates) {
  Tensor acc;
  for (const auto& pi : gates.pi) {
    Tensor term = expected_l0(pi, gates.hc);
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc.defined() ? acc : Tensor::scalar(0.0);
}

double expected_sparsity(const GateSet& gates) {
  double total = 0.0;
  int64_t count = 0;
  for (const auto& pi : gates.pi) {
    for (double p : pi.data()) {
      total += expected_l0_value(p, gates.hc);
      ++count;
    }
  }
  return count == 0 ? 0.0 : 1.0 - total / count;
}

}  // namespace headlab
