#include "headlab/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "headlab/errors.hpp"

namespace headlab {

using detail::TensorNode;
using MatRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

namespace {

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> data,
                                      bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  if (static_cast<int64_t>(n->data.size()) != n->size())
    throw DimensionError("tensor data length " +
                         std::to_string(n->data.size()) +
                         " does not match shape " + shape_str(n->shape));
  return n;
}

// Builds a result node; records parents and backward_fn only when some
// parent needs gradients.
Tensor make_op(Shape shape, std::vector<double> data,
               std::vector<Tensor> parents,
               std::function<void(TensorNode*)> backward) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  auto n = make_node(std::move(shape), std::move(data), rg);
  if (rg) {
    for (const auto& p : parents) n->parents.push_back(p.node());
    TensorNode* self = n.get();
    n->backward_fn = [self, backward]() { backward(self); };
  }
  return Tensor::wrap(n);
}

void require_2d(const Tensor& t, const char* who) {
  if (t.shape().size() != 2)
    throw DimensionError(std::string(who) + ": expected 2-d tensor, got " +
                         shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(who) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::wrap(std::shared_ptr<TensorNode> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  int64_t n = 1;
  for (int64_t s : shape) n *= s;
  return wrap(make_node(std::move(shape), std::vector<double>(n, 0.0),
                        requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  int64_t n = 1;
  for (int64_t s : shape) n *= s;
  return wrap(make_node(std::move(shape), std::vector<double>(n, value),
                        requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  return wrap(make_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

int64_t Tensor::rows() const {
  require_2d(*this, "rows");
  return node_->shape[0];
}

int64_t Tensor::cols() const {
  require_2d(*this, "cols");
  return node_->shape[1];
}

double Tensor::value() const {
  if (size() != 1)
    throw DimensionError("value(): tensor is not scalar, shape " +
                         shape_str(shape()));
  return node_->data[0];
}

std::vector<double>& Tensor::grad() {
  node_->ensure_grad();
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  return wrap(make_node(node_->shape, node_->data, false));
}

void Tensor::backward() {
  if (size() != 1)
    throw StateError("backward() requires a scalar root, shape " +
                     shape_str(shape()));
  if (node_->consumed)
    throw StateError("backward() called twice on the same graph");
  node_->consumed = true;

  // Iterative post-order topological sort.
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      TensorNode* p = n->parents[idx++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) {
      n->backward_fn();
      n->backward_fn = nullptr;  // release captured buffers
    }
  }
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m * n));
  MapCM A(a.data().data(), m, k), B(b.data().data(), k, n);
  MapM(out.data(), m, n) = A * B;
  auto an = a.node();
  auto bn = b.node();
  return make_op({m, n}, std::move(out), {a, b},
                 [an, bn, m, k, n](TensorNode* self) {
                   MapCM G(self->grad.data(), m, n);
                   if (an->requires_grad) {
                     an->ensure_grad();
                     MapCM B(bn->data.data(), k, n);
                     MapM(an->grad.data(), m, k) += G * B.transpose();
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     MapCM A(an->data.data(), m, k);
                     MapM(bn->grad.data(), k, n) += A.transpose() * G;
                   }
                 });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const int64_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw DimensionError("matmul_nt: inner dimensions differ, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                         "^T");
  std::vector<double> out(static_cast<size_t>(m * n));
  MapCM A(a.data().data(), m, k), B(b.data().data(), n, k);
  MapM(out.data(), m, n) = A * B.transpose();
  auto an = a.node();
  auto bn = b.node();
  return make_op({m, n}, std::move(out), {a, b},
                 [an, bn, m, k, n](TensorNode* self) {
                   MapCM G(self->grad.data(), m, n);
                   if (an->requires_grad) {
                     an->ensure_grad();
                     MapCM B(bn->data.data(), n, k);
                     MapM(an->grad.data(), m, k) += G * B;
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     MapCM A(an->data.data(), m, k);
                     MapM(bn->grad.data(), n, k) += G.transpose() * A;
                   }
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode* s) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < s->grad.size(); ++i) an->grad[i] += s->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < s->grad.size(); ++i) bn->grad[i] += s->grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode* s) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < s->grad.size(); ++i) an->grad[i] += s->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < s->grad.size(); ++i) bn->grad[i] -= s->grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode* s) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < s->grad.size(); ++i)
        an->grad[i] += s->grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < s->grad.size(); ++i)
        bn->grad[i] += s->grad[i] * an->data[i];
    }
  });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require_2d(m, "add_rowvec");
  if (v.shape().size() != 1 || v.shape()[0] != m.cols())
    throw DimensionError("add_rowvec: vector " + shape_str(v.shape()) +
                         " does not match matrix " + shape_str(m.shape()));
  const int64_t rows = m.rows(), cols = m.cols();
  std::vector<double> out(m.data());
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] += v.data()[c];
  auto mn = m.node();
  auto vn = v.node();
  return make_op(m.shape(), std::move(out), {m, v},
                 [mn, vn, rows, cols](TensorNode* s) {
                   if (mn->requires_grad) {
                     mn->ensure_grad();
                     for (size_t i = 0; i < s->grad.size(); ++i)
                       mn->grad[i] += s->grad[i];
                   }
                   if (vn->requires_grad) {
                     vn->ensure_grad();
                     for (int64_t r = 0; r < rows; ++r)
                       for (int64_t c = 0; c < cols; ++c)
                         vn->grad[c] += s->grad[r * cols + c];
                   }
                 });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.data());
  for (double& x : out) x *= c;
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an, c](TensorNode* s) {
    an->ensure_grad();
    for (size_t i = 0; i < s->grad.size(); ++i) an->grad[i] += c * s->grad[i];
  });
}

Tensor scale_by(const Tensor& m, const Tensor& s) {
  if (s.size() != 1)
    throw DimensionError("scale_by: scale must be scalar, got " +
                         shape_str(s.shape()));
  const double c = s.value();
  std::vector<double> out(m.data());
  for (double& x : out) x *= c;
  auto mn = m.node();
  auto sn = s.node();
  return make_op(m.shape(), std::move(out), {m, s},
                 [mn, sn, c](TensorNode* self) {
                   if (mn->requires_grad) {
                     mn->ensure_grad();
                     for (size_t i = 0; i < self->grad.size(); ++i)
                       mn->grad[i] += c * self->grad[i];
                   }
                   if (sn->requires_grad) {
                     sn->ensure_grad();
                     double acc = 0.0;
                     for (size_t i = 0; i < self->grad.size(); ++i)
                       acc += self->grad[i] * mn->data[i];
                     sn->grad[0] += acc;
                   }
                 });
}

Tensor add_constant(const Tensor& a, const std::vector<double>& c) {
  if (c.size() != a.data().size())
    throw DimensionError("add_constant: constant length " +
                         std::to_string(c.size()) + " vs tensor " +
                         shape_str(a.shape()));
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an](TensorNode* s) {
    an->ensure_grad();
    for (size_t i = 0; i < s->grad.size(); ++i) an->grad[i] += s->grad[i];
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.shape().empty() || x.shape().back() < 1)
    throw DimensionError("softmax_lastdim: empty last dimension");
  const int64_t n = x.shape().back();
  const int64_t rows = x.size() / n;
  std::vector<double> out(x.data().size());
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* o = out.data() + r * n;
    double mx = in[0];
    for (int64_t i = 0; i < n; ++i) {
      if (std::isnan(in[i]))
        throw NumericError("softmax_lastdim: NaN input at row " +
                           std::to_string(r));
      mx = std::max(mx, in[i]);
    }
    double z = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      o[i] = std::exp(in[i] - mx);
      z += o[i];
    }
    for (int64_t i = 0; i < n; ++i) o[i] /= z;
  }
  auto xn = x.node();
  return make_op(x.shape(), std::move(out), {x},
                 [xn, rows, n](TensorNode* s) {
                   xn->ensure_grad();
                   for (int64_t r = 0; r < rows; ++r) {
                     const double* y = s->data.data() + r * n;
                     const double* gy = s->grad.data() + r * n;
                     double dot = 0.0;
                     for (int64_t i = 0; i < n; ++i) dot += gy[i] * y[i];
                     double* gx = xn->grad.data() + r * n;
                     for (int64_t i = 0; i < n; ++i)
                       gx[i] += (gy[i] - dot) * y[i];
                   }
                 });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps) {
  if (x.shape().empty())
    throw DimensionError("layernorm: scalar input");
  const int64_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d})
    throw DimensionError("layernorm: gain/bias " + shape_str(gain.shape()) +
                         "/" + shape_str(bias.shape()) +
                         " do not match feature dim " + std::to_string(d));
  const int64_t rows = x.size() / d;
  std::vector<double> out(x.data().size());
  std::vector<double> inv_std(rows), xhat(x.data().size());
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * d;
    double mu = 0.0;
    for (int64_t i = 0; i < d; ++i) mu += in[i];
    mu /= d;
    double var = 0.0;
    for (int64_t i = 0; i < d; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= d;
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = istd;
    for (int64_t i = 0; i < d; ++i) {
      const double xh = (in[i] - mu) * istd;
      xhat[r * d + i] = xh;
      out[r * d + i] = gain.data()[i] * xh + bias.data()[i];
    }
  }
  auto xn = x.node();
  auto gn = gain.node();
  auto bn = bias.node();
  return make_op(
      x.shape(), std::move(out), {x, gain, bias},
      [xn, gn, bn, rows, d, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](TensorNode* s) {
        for (int64_t r = 0; r < rows; ++r) {
          const double* gy = s->grad.data() + r * d;
          const double* xh = xhat.data() + r * d;
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (int64_t i = 0; i < d; ++i) gn->grad[i] += gy[i] * xh[i];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < d; ++i) bn->grad[i] += gy[i];
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            double m1 = 0.0, m2 = 0.0;
            for (int64_t i = 0; i < d; ++i) {
              const double dxh = gy[i] * gn->data[i];
              m1 += dxh;
              m2 += dxh * xh[i];
            }
            m1 /= d;
            m2 /= d;
            double* gx = xn->grad.data() + r * d;
            for (int64_t i = 0; i < d; ++i) {
              const double dxh = gy[i] * gn->data[i];
              gx[i] += inv_std[r] * (dxh - m1 - xh[i] * m2);
            }
          }
        }
      });
}

Tensor embedding(const Tensor& table, const std::vector<int32_t>& ids) {
  require_2d(table, "embedding");
  const int64_t v = table.rows(), d = table.cols();
  const int64_t t = static_cast<int64_t>(ids.size());
  std::vector<double> out(static_cast<size_t>(t * d));
  for (int64_t i = 0; i < t; ++i) {
    const int32_t id = ids[i];
    if (id < 0 || id >= v)
      throw IndexError("embedding: token id " + std::to_string(id) +
                       " out of range [0," + std::to_string(v) + ")");
    std::copy_n(table.data().data() + static_cast<int64_t>(id) * d, d,
                out.data() + i * d);
  }
  auto tn = table.node();
  return make_op({t, d}, std::move(out), {table},
                 [tn, ids, d](TensorNode* s) {
                   tn->ensure_grad();
                   for (size_t i = 0; i < ids.size(); ++i) {
                     double* dst = tn->grad.data() +
                                   static_cast<int64_t>(ids[i]) * d;
                     const double* src = s->grad.data() + i * d;
                     for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
                   }
                 });
}

Tensor cross_entropy(const Tensor& logits,
                     const std::vector<int32_t>& targets) {
  require_2d(logits, "cross_entropy");
  const int64_t t = logits.rows(), v = logits.cols();
  if (static_cast<int64_t>(targets.size()) != t)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(t) + " rows");
  double loss = 0.0;
  std::vector<double> probs(logits.data().size());
  for (int64_t r = 0; r < t; ++r) {
    const int32_t y = targets[r];
    if (y < 0 || y >= v)
      throw IndexError("cross_entropy: target " + std::to_string(y) +
                       " out of range [0," + std::to_string(v) + ")");
    const double* in = logits.data().data() + r * v;
    double mx = in[0];
    for (int64_t i = 0; i < v; ++i) mx = std::max(mx, in[i]);
    double z = 0.0;
    double* p = probs.data() + r * v;
    for (int64_t i = 0; i < v; ++i) {
      p[i] = std::exp(in[i] - mx);
      z += p[i];
    }
    for (int64_t i = 0; i < v; ++i) p[i] /= z;
    loss -= in[y] - mx - std::log(z);
  }
  loss /= t;
  auto ln = logits.node();
  return make_op({1}, {loss}, {logits},
                 [ln, targets, t, v, probs = std::move(probs)](TensorNode* s) {
                   ln->ensure_grad();
                   const double g = s->grad[0] / t;
                   for (int64_t r = 0; r < t; ++r) {
                     const double* p = probs.data() + r * v;
                     double* gx = ln->grad.data() + r * v;
                     for (int64_t i = 0; i < v; ++i) gx[i] += g * p[i];
                     gx[targets[r]] -= g;
                   }
                 });
}

Tensor reshape(const Tensor& a, Shape shape) {
  int64_t n = 1;
  for (int64_t s : shape) n *= s;
  if (n != a.size())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) +
                         " as " + shape_str(shape));
  auto an = a.node();
  return make_op(std::move(shape), a.data(), {a}, [an](TensorNode* s) {
    an->ensure_grad();
    for (size_t i = 0; i < s->grad.size(); ++i) an->grad[i] += s->grad[i];
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_2d(a, "concat_rows");
  require_2d(b, "concat_rows");
  if (a.cols() != b.cols())
    throw DimensionError("concat_rows: column mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int64_t ra = a.rows(), rb = b.rows(), c = a.cols();
  std::vector<double> out;
  out.reserve(static_cast<size_t>((ra + rb) * c));
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  auto an = a.node();
  auto bn = b.node();
  return make_op({ra + rb, c}, std::move(out), {a, b},
                 [an, bn, ra, rb, c](TensorNode* s) {
                   if (an->requires_grad) {
                     an->ensure_grad();
                     for (int64_t i = 0; i < ra * c; ++i)
                       an->grad[i] += s->grad[i];
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     for (int64_t i = 0; i < rb * c; ++i)
                       bn->grad[i] += s->grad[ra * c + i];
                   }
                 });
}

Tensor slice_rows(const Tensor& a, int64_t start, int64_t count) {
  require_2d(a, "slice_rows");
  if (start < 0 || count < 0 || start + count > a.rows())
    throw IndexError("slice_rows: [" + std::to_string(start) + "," +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(a.rows()) + " rows");
  const int64_t c = a.cols();
  std::vector<double> out(a.data().begin() + start * c,
                          a.data().begin() + (start + count) * c);
  auto an = a.node();
  return make_op({count, c}, std::move(out), {a},
                 [an, start, count, c](TensorNode* s) {
                   an->ensure_grad();
                   for (int64_t i = 0; i < count * c; ++i)
                     an->grad[start * c + i] += s->grad[i];
                 });
}

Tensor slice_cols(const Tensor& a, int64_t start, int64_t count) {
  require_2d(a, "slice_cols");
  if (start < 0 || count < 0 || start + count > a.cols())
    throw IndexError("slice_cols: [" + std::to_string(start) + "," +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(a.cols()) + " columns");
  const int64_t r = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<size_t>(r * count));
  for (int64_t i = 0; i < r; ++i)
    std::copy_n(a.data().data() + i * c + start, count, out.data() + i * count);
  auto an = a.node();
  return make_op({r, count}, std::move(out), {a},
                 [an, start, count, r, c](TensorNode* s) {
                   an->ensure_grad();
                   for (int64_t i = 0; i < r; ++i)
                     for (int64_t j = 0; j < count; ++j)
                       an->grad[i * c + start + j] += s->grad[i * count + j];
                 });
}

Tensor select(const Tensor& v, int64_t index) {
  if (v.shape().size() != 1)
    throw DimensionError("select: expected 1-d tensor, got " +
                         shape_str(v.shape()));
  if (index < 0 || index >= v.size())
    throw IndexError("select: index " + std::to_string(index) + " out of " +
                     std::to_string(v.size()));
  auto vn = v.node();
  return make_op({1}, {v.data()[index]}, {v}, [vn, index](TensorNode* s) {
    vn->ensure_grad();
    vn->grad[index] += s->grad[0];
  });
}

Tensor rel_shift_pad(const Tensor& b, int64_t mem_len, int64_t n_persist) {
  require_2d(b, "rel_shift_pad");
  const int64_t t = b.rows(), p = b.cols();
  if (p != mem_len + t)
    throw DimensionError("rel_shift_pad: expected " +
                         std::to_string(mem_len + t) + " distance columns, got " +
                         std::to_string(p));
  const int64_t pc = p + n_persist;
  std::vector<double> out(static_cast<size_t>(t * pc), 0.0);
  for (int64_t q = 0; q < t; ++q)
    for (int64_t j = 0; j <= mem_len + q; ++j)
      out[q * pc + j] = b.data()[q * p + (mem_len + q - j)];
  auto bn = b.node();
  return make_op({t, pc}, std::move(out), {b},
                 [bn, t, p, pc, mem_len](TensorNode* s) {
                   bn->ensure_grad();
                   for (int64_t q = 0; q < t; ++q)
                     for (int64_t j = 0; j <= mem_len + q; ++j)
                       bn->grad[q * p + (mem_len + q - j)] +=
                           s->grad[q * pc + j];
                 });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  auto an = a.node();
  return make_op({1}, {acc}, {a}, [an](TensorNode* s) {
    an->ensure_grad();
    for (double& g : an->grad) g += s->grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  acc /= n;
  auto an = a.node();
  return make_op({1}, {acc}, {a}, [an, n](TensorNode* s) {
    an->ensure_grad();
    for (double& g : an->grad) g += s->grad[0] / n;
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.data());
  for (double& x : out) x = 1.0 / (1.0 + std::exp(-x));
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an](TensorNode* s) {
    an->ensure_grad();
    for (size_t i = 0; i < s->grad.size(); ++i)
      an->grad[i] += s->grad[i] * s->data[i] * (1.0 - s->data[i]);
  });
}

Tensor dropout(const Tensor& a, double p, std::mt19937_64& rng,
               bool training) {
  if (!training || p <= 0.0) return a;
  const double keep = 1.0 - p;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> mask(a.data().size());
  for (double& m : mask) m = (uni(rng) < keep) ? 1.0 / keep : 0.0;
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a},
                 [an, mask = std::move(mask)](TensorNode* s) {
                   an->ensure_grad();
                   for (size_t i = 0; i < s->grad.size(); ++i)
                     an->grad[i] += s->grad[i] * mask[i];
                 });
}

}  // namespace headlab
