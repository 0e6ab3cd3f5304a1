#ifndef HEADLAB_TENSOR_HPP_
#define HEADLAB_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace headlab {

using Shape = std::vector<int64_t>;

namespace detail {

// One node of the compute graph. `parents` keeps the upstream graph alive;
// `backward_fn` scatters this node's grad into the parents' grads.
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool consumed = false;  // a graph is consumed by exactly one backward pass
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;

  int64_t size() const {
    int64_t n = 1;
    for (int64_t s : shape) n *= s;
    return n;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense f64 tensor with reverse-mode gradient support. Value-semantic handle
// to a shared graph node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return node_->size(); }
  int64_t rows() const;
  int64_t cols() const;

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  double value() const;  // scalar only
  double at(int64_t i) const { return node_->data[static_cast<size_t>(i)]; }

  bool requires_grad() const { return node_->requires_grad; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  // Runs reverse-mode accumulation from this scalar node. The graph may be
  // consumed only once.
  void backward();

  // Constant copy, cut from the graph.
  Tensor detach() const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::TensorNode> n);

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// ---- graph ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T, [m,k]x[n,k]

Tensor add(const Tensor& a, const Tensor& b);  // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // broadcast v over rows
Tensor scale(const Tensor& a, double c);
Tensor scale_by(const Tensor& m, const Tensor& s);  // s: scalar tensor
Tensor add_constant(const Tensor& a, const std::vector<double>& c);

Tensor softmax_lastdim(const Tensor& x);
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-5);
Tensor embedding(const Tensor& table, const std::vector<int32_t>& ids);
Tensor cross_entropy(const Tensor& logits, const std::vector<int32_t>& targets);

Tensor reshape(const Tensor& a, Shape shape);  // same element count
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, int64_t start, int64_t count);
Tensor slice_cols(const Tensor& a, int64_t start, int64_t count);
Tensor select(const Tensor& v, int64_t index);  // 1-d -> scalar

// Maps relative-distance scores B[t, r] (r = distance, 0..mem_len+T-1) onto
// absolute key positions, zero-padding n_persist trailing columns:
// out[t, j] = B[t, mem_len + t - j] for j < mem_len+T (0 where t+mem_len < j).
Tensor rel_shift_pad(const Tensor& b, int64_t mem_len, int64_t n_persist);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor dropout(const Tensor& a, double p, std::mt19937_64& rng, bool training);

std::string shape_str(const Shape& s);

}  // namespace headlab

#endif  // HEADLAB_TENSOR_HPP_
