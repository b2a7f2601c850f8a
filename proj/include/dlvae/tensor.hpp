#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dlvae/errors.hpp"

namespace dlvae {

// Dense float32 tensor, row-major, rank 1 or 2. Copies are shallow: they
// share the value buffer. Gradient state lives in a separate buffer that is
// allocated when a tensor is marked trainable.
using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class GradTape;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor scalar(float value);
  static Tensor from_data(Shape shape, std::vector<float> data);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int numel() const { return static_cast<int>(data_ ? data_->size() : 0); }

  float* data() { return data_->data(); }
  const float* data() const { return data_->data(); }
  std::vector<float>& vec() { return *data_; }
  const std::vector<float>& vec() const { return *data_; }
  float item() const;
  float at(int i) const { return (*data_)[static_cast<std::size_t>(i)]; }
  float at(int r, int c) const {
    return (*data_)[static_cast<std::size_t>(r) * shape_[1] + c];
  }
  float& at(int i) { return (*data_)[static_cast<std::size_t>(i)]; }
  float& at(int r, int c) {
    return (*data_)[static_cast<std::size_t>(r) * shape_[1] + c];
  }

  // Trainable tensors are autodiff leaves: backward() accumulates into their
  // persistent grad buffer.
  Tensor& set_trainable(bool on = true);
  bool trainable() const { return grad_ != nullptr; }
  std::vector<float>& grad();
  const std::vector<float>& grad() const;
  void zero_grad();
  std::shared_ptr<std::vector<float>> grad_handle() const { return grad_; }

  // Same value buffer, no tape membership, not trainable: blocks gradients.
  Tensor detached() const;
  // Deep copy of the values (fresh buffer).
  Tensor clone() const;

  bool all_finite() const;

  // identity of the underlying buffer, used to memoize tape leaves
  const void* buffer_id() const { return static_cast<const void*>(data_.get()); }

  // tape linkage, managed by op implementations
  int tape_node() const { return node_; }
  void set_tape_node(int n) { node_ = n; }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<float>> data_;
  std::shared_ptr<std::vector<float>> grad_;
  int node_ = -1;  // index into the active tape, -1 if untracked
};

// Reverse-mode tape. One tape per training step; activate with TapeScope.
// Ops record a node per output while a tape is active and any input is
// tracked (a trainable leaf or an earlier node output).
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  // Runs reverse accumulation from a scalar loss. May be called once per
  // recorded graph; flushes leaf gradients into their tensors' grad buffers.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }
  bool used() const { return backward_done_; }

  static GradTape* active();

  // recording interface used by op implementations
  int ensure_leaf(const Tensor& t);
  int add_node(const Shape& shape, std::function<void(GradTape&, int)> vjp);
  // accumulation buffer for a node's incoming gradient, zero on first access
  std::vector<float>& grad_buffer(int node);

 private:
  friend class TapeScope;

  struct Node {
    Shape shape;
    std::vector<float> grad;  // allocated lazily during backward
    std::function<void(GradTape&, int)> vjp;  // nullptr for leaves
    std::shared_ptr<std::vector<float>> leaf_sink;  // leaves: external grad buffer
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<const void*, int>> leaf_index_;
  bool backward_done_ = false;
};

class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* prev_;
};

// ---- differentiable ops ----
// Binary elementwise ops accept equal shapes, or [m,n] op [n] which
// broadcasts the vector across rows (bias pattern). Scalar variants exist for
// constants.

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, float c);
Tensor mul_scalar(const Tensor& a, float c);

Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);       // domain error on x <= 0; clamps at 1e-7
Tensor sqrt(const Tensor& a);      // domain error on x <= 0; clamps at 1e-7
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softplus(const Tensor& a);  // log(1 + e^x), overflow-safe
Tensor clamp_min(const Tensor& a, float lo);

Tensor sum(const Tensor& a);             // scalar
Tensor mean(const Tensor& a);            // scalar
Tensor sum(const Tensor& a, int axis);   // rank-2 only; axis 0 -> [n], 1 -> [m]
Tensor mean(const Tensor& a, int axis);

Tensor log_softmax(const Tensor& a);        // rank-2, rows
Tensor concat_cols(const Tensor& a, const Tensor& b);
// -mean_i logprobs[i, labels[i]]
Tensor nll_loss(const Tensor& logprobs, const std::vector<int>& labels);

// log N(x | mu, 1) summed over trailing dim -> per-row [m]
Tensor gaussian_unit_logprob_rows(const Tensor& x, const Tensor& mu);
// sum_j x log s(l) + (1-x) log(1-s(l)) per row, computed from logits
Tensor bernoulli_logprob_rows(const Tensor& x, const Tensor& logits);

// ---- gradient checking ----
// Central finite differences on every trainable leaf feeding `f`.
// Returns the max relative error max |a - n| / (|n| + eps_denom).
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

GradCheckResult grad_check(
    const std::function<Tensor()>& f,
    const std::vector<std::pair<std::string, Tensor*>>& params,
    float h = 1e-3f, double eps_denom = 1e-8);

}  // namespace dlvae
