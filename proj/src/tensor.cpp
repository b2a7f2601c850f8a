#include "dlvae/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <sstream>
#include <utility>

namespace dlvae {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

thread_local GradTape* g_active_tape = nullptr;

constexpr float kPosClamp = 1e-7f;  // floor for log/sqrt arguments

float stable_sigmoid(float x) {
  if (x >= 0.0f) {
    const float e = std::exp(-x);
    return 1.0f / (1.0f + e);
  }
  const float e = std::exp(x);
  return e / (1.0f + e);
}

float stable_softplus(float x) {
  return std::max(x, 0.0f) + std::log1p(std::exp(-std::abs(x)));
}

[[noreturn]] void dim_fail(const std::string& op, const Tensor& a, const Tensor& b) {
  throw DimensionError(op + ": incompatible shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()));
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                         shape_str(a.shape()));
  }
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw DimensionError("shape with non-positive dim " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

// ---- Tensor ----

Tensor Tensor::zeros(Shape shape) {
  Tensor t;
  const std::size_t n = shape_numel(shape);
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<float>>(n, 0.0f);
  return t;
}

Tensor Tensor::full(Shape shape, float value) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.data_->begin(), t.data_->end(), value);
  return t;
}

Tensor Tensor::scalar(float value) { return full({1}, value); }

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("from_data: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<float>>(std::move(data));
  return t;
}

float Tensor::item() const {
  if (!data_ || data_->size() != 1) {
    throw DimensionError("item: tensor is not scalar, shape " + shape_str(shape_));
  }
  return (*data_)[0];
}

Tensor& Tensor::set_trainable(bool on) {
  if (on) {
    if (!grad_) grad_ = std::make_shared<std::vector<float>>(data_->size(), 0.0f);
  } else {
    grad_.reset();
  }
  return *this;
}

std::vector<float>& Tensor::grad() {
  if (!grad_) throw ContractError("grad: tensor is not trainable");
  return *grad_;
}

const std::vector<float>& Tensor::grad() const {
  if (!grad_) throw ContractError("grad: tensor is not trainable");
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0f);
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = std::make_shared<std::vector<float>>(*data_);
  return t;
}

bool Tensor::all_finite() const {
  for (float v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---- GradTape ----

GradTape* GradTape::active() { return g_active_tape; }

TapeScope::TapeScope(GradTape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

int GradTape::ensure_leaf(const Tensor& t) {
  const void* key = t.buffer_id();
  for (const auto& [k, idx] : leaf_index_) {
    if (k == key) return idx;
  }
  Node n;
  n.shape = t.shape();
  n.leaf_sink = t.grad_handle();
  const int idx = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(n));
  leaf_index_.emplace_back(key, idx);
  return idx;
}

int GradTape::add_node(const Shape& shape, std::function<void(GradTape&, int)> vjp) {
  Node n;
  n.shape = shape;
  n.vjp = std::move(vjp);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<float>& GradTape::grad_buffer(int node) {
  Node& n = nodes_[static_cast<std::size_t>(node)];
  if (n.grad.empty()) n.grad.assign(shape_numel(n.shape), 0.0f);
  return n.grad;
}

void GradTape::backward(const Tensor& loss) {
  if (backward_done_) {
    throw ContractError("backward: tape already consumed; record a fresh tape per step");
  }
  if (loss.numel() != 1) {
    throw DimensionError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  const int root = loss.tape_node();
  if (root < 0 || root >= static_cast<int>(nodes_.size())) {
    throw ContractError("backward: loss is not a node of this tape");
  }
  backward_done_ = true;
  grad_buffer(root)[0] = 1.0f;
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.empty()) continue;  // not reached from the loss
    if (n.vjp) {
      n.vjp(*this, i);
    } else if (n.leaf_sink) {
      std::vector<float>& sink = *n.leaf_sink;
      for (std::size_t j = 0; j < sink.size(); ++j) sink[j] += n.grad[j];
    }
  }
}

// ---- op recording ----

namespace {

// Decides per-op whether to record, resolves parent node ids, and attaches
// the vjp closure to the output tensor.
struct Rec {
  GradTape* tape = nullptr;
  int pa = -1;
  int pb = -1;

  Rec(const Tensor& a) {
    tape = g_active_tape;
    if (!tape) return;
    pa = resolve(a);
    if (pa < 0) tape = nullptr;
  }
  Rec(const Tensor& a, const Tensor& b) {
    tape = g_active_tape;
    if (!tape) return;
    pa = resolve(a);
    pb = resolve(b);
    if (pa < 0 && pb < 0) tape = nullptr;
  }

  int resolve(const Tensor& t) {
    if (t.tape_node() >= 0) return t.tape_node();
    if (t.trainable()) return tape->ensure_leaf(t);
    return -1;
  }

  void finish(Tensor& out, std::function<void(GradTape&, int)> vjp) const {
    if (!tape) return;
    out.set_tape_node(tape->add_node(out.shape(), std::move(vjp)));
  }
};

// saved forward buffers are shared_ptr copies: cheap, and values are never
// mutated in place for op outputs
std::shared_ptr<const std::vector<float>> saved(const Tensor& t) {
  return std::make_shared<std::vector<float>>(t.vec());
}

template <class F, class Da, class Db>
Tensor binary_elementwise(const char* name, const Tensor& a, const Tensor& b,
                          F fwd, Da da, Db db) {
  const bool same = a.shape() == b.shape();
  const bool bcast = !same && a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0);
  if (!same && !bcast) dim_fail(name, a, b);

  Tensor out = Tensor::zeros(a.shape());
  const float* av = a.data();
  const float* bv = b.data();
  float* ov = out.data();
  const int total = a.numel();
  const int n = bcast ? b.dim(0) : 0;
  if (same) {
    for (int i = 0; i < total; ++i) ov[i] = fwd(av[i], bv[i]);
  } else {
    for (int i = 0; i < total; ++i) ov[i] = fwd(av[i], bv[i % n]);
  }

  Rec rec(a, b);
  if (!rec.tape) return out;
  auto as = saved(a);
  auto bs = saved(b);
  rec.finish(out, [pa = rec.pa, pb = rec.pb, as, bs, da, db, total, n,
                   bcast](GradTape& t, int self) {
    const std::vector<float>& g = t.grad_buffer(self);
    const float* A = as->data();
    const float* B = bs->data();
    if (pa >= 0) {
      std::vector<float>& ga = t.grad_buffer(pa);
      for (int i = 0; i < total; ++i) {
        ga[i] += g[i] * da(A[i], B[bcast ? i % n : i]);
      }
    }
    if (pb >= 0) {
      std::vector<float>& gb = t.grad_buffer(pb);
      if (!bcast) {
        for (int i = 0; i < total; ++i) gb[i] += g[i] * db(A[i], B[i]);
      } else {
        for (int i = 0; i < total; ++i) gb[i % n] += g[i] * db(A[i], B[i % n]);
      }
    }
  });
  return out;
}

// partial computed from the input value
template <class F, class Da>
Tensor unary_from_input(const Tensor& a, F fwd, Da da) {
  Tensor out = Tensor::zeros(a.shape());
  const float* av = a.data();
  float* ov = out.data();
  const int total = a.numel();
  for (int i = 0; i < total; ++i) ov[i] = fwd(av[i]);

  Rec rec(a);
  if (!rec.tape) return out;
  auto as = saved(a);
  rec.finish(out, [pa = rec.pa, as, da, total](GradTape& t, int self) {
    const std::vector<float>& g = t.grad_buffer(self);
    std::vector<float>& ga = t.grad_buffer(pa);
    const float* A = as->data();
    for (int i = 0; i < total; ++i) ga[i] += g[i] * da(A[i]);
  });
  return out;
}

// partial computed from the output value (exp, sigmoid, tanh)
template <class F, class Do>
Tensor unary_from_output(const Tensor& a, F fwd, Do dout) {
  Tensor out = Tensor::zeros(a.shape());
  const float* av = a.data();
  float* ov = out.data();
  const int total = a.numel();
  for (int i = 0; i < total; ++i) ov[i] = fwd(av[i]);

  Rec rec(a);
  if (!rec.tape) return out;
  auto os = saved(out);
  rec.finish(out, [pa = rec.pa, os, dout, total](GradTape& t, int self) {
    const std::vector<float>& g = t.grad_buffer(self);
    std::vector<float>& ga = t.grad_buffer(pa);
    const float* O = os->data();
    for (int i = 0; i < total; ++i) ga[i] += g[i] * dout(O[i]);
  });
  return out;
}

}  // namespace

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.dim(1) != b.dim(0)) dim_fail("matmul", a, b);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  MapMat(out.data(), m, n).noalias() =
      MapConst(a.data(), m, k) * MapConst(b.data(), k, n);

  Rec rec(a, b);
  if (!rec.tape) return out;
  auto as = saved(a);
  auto bs = saved(b);
  rec.finish(out, [pa = rec.pa, pb = rec.pb, as, bs, m, k, n](GradTape& t, int self) {
    const std::vector<float>& g = t.grad_buffer(self);
    MapConst G(g.data(), m, n);
    if (pa >= 0) {
      MapMat(t.grad_buffer(pa).data(), m, k).noalias() +=
          G * MapConst(bs->data(), k, n).transpose();
    }
    if (pb >= 0) {
      MapMat(t.grad_buffer(pb).data(), k, n).noalias() +=
          MapConst(as->data(), m, k).transpose() * G;
    }
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](float x, float y) { return x + y; },
      [](float, float) { return 1.0f; }, [](float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](float x, float y) { return x - y; },
      [](float, float) { return 1.0f; }, [](float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](float x, float y) { return x * y; },
      [](float, float y) { return y; }, [](float x, float) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (float v : b.vec()) {
    if (v == 0.0f) throw DomainError("div: division by zero");
  }
  return binary_elementwise(
      "div", a, b, [](float x, float y) { return x / y; },
      [](float, float y) { return 1.0f / y; },
      [](float x, float y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, float c) {
  return unary_from_input(a, [c](float x) { return x + c; },
                          [](float) { return 1.0f; });
}

Tensor mul_scalar(const Tensor& a, float c) {
  return unary_from_input(a, [c](float x) { return x * c; },
                          [c](float) { return c; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0f); }

Tensor exp(const Tensor& a) {
  return unary_from_output(a, [](float x) { return std::exp(x); },
                           [](float o) { return o; });
}

Tensor log(const Tensor& a) {
  for (float v : a.vec()) {
    if (v <= 0.0f) {
      throw DomainError("log: non-positive argument " + std::to_string(v));
    }
  }
  return unary_from_input(
      a, [](float x) { return std::log(std::max(x, kPosClamp)); },
      [](float x) { return 1.0f / std::max(x, kPosClamp); });
}

Tensor sqrt(const Tensor& a) {
  for (float v : a.vec()) {
    if (v <= 0.0f) {
      throw DomainError("sqrt: non-positive argument " + std::to_string(v));
    }
  }
  return unary_from_input(
      a, [](float x) { return std::sqrt(std::max(x, kPosClamp)); },
      [](float x) { return 0.5f / std::sqrt(std::max(x, kPosClamp)); });
}

Tensor square(const Tensor& a) {
  return unary_from_input(a, [](float x) { return x * x; },
                          [](float x) { return 2.0f * x; });
}

Tensor relu(const Tensor& a) {
  return unary_from_input(a, [](float x) { return x > 0.0f ? x : 0.0f; },
                          [](float x) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_from_output(a, stable_sigmoid,
                           [](float o) { return o * (1.0f - o); });
}

Tensor tanh(const Tensor& a) {
  return unary_from_output(a, [](float x) { return std::tanh(x); },
                           [](float o) { return 1.0f - o * o; });
}

Tensor softplus(const Tensor& a) {
  return unary_from_input(a, stable_softplus, stable_sigmoid);
}

Tensor clamp_min(const Tensor& a, float lo) {
  return unary_from_input(
      a, [lo](float x) { return x < lo ? lo : x; },
      [lo](float x) { return x >= lo ? 1.0f : 0.0f; });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.vec()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  Rec rec(a);
  if (!rec.tape) return out;
  const int total = a.numel();
  rec.finish(out, [pa = rec.pa, total](GradTape& t, int self) {
    const float g = t.grad_buffer(self)[0];
    std::vector<float>& ga = t.grad_buffer(pa);
    for (int i = 0; i < total; ++i) ga[i] += g;
  });
  return out;
}

Tensor mean(const Tensor& a) {
  const int total = a.numel();
  double acc = 0.0;
  for (float v : a.vec()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc / total));
  Rec rec(a);
  if (!rec.tape) return out;
  rec.finish(out, [pa = rec.pa, total](GradTape& t, int self) {
    const float g = t.grad_buffer(self)[0] / static_cast<float>(total);
    std::vector<float>& ga = t.grad_buffer(pa);
    for (int i = 0; i < total; ++i) ga[i] += g;
  });
  return out;
}

namespace {

Tensor reduce_axis(const Tensor& a, int axis, bool take_mean) {
  require_rank2(take_mean ? "mean" : "sum", a);
  if (axis != 0 && axis != 1) {
    throw DimensionError("reduce: axis must be 0 or 1");
  }
  const int m = a.dim(0), n = a.dim(1);
  const int out_len = axis == 0 ? n : m;
  const float scale = take_mean ? 1.0f / static_cast<float>(axis == 0 ? m : n) : 1.0f;
  Tensor out = Tensor::zeros({out_len});
  const float* av = a.data();
  float* ov = out.data();
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) {
      ov[axis == 0 ? c : r] += av[r * n + c];
    }
  }
  if (take_mean) {
    for (int i = 0; i < out_len; ++i) ov[i] *= scale;
  }

  Rec rec(a);
  if (!rec.tape) return out;
  rec.finish(out, [pa = rec.pa, m, n, axis, scale](GradTape& t, int self) {
    const std::vector<float>& g = t.grad_buffer(self);
    std::vector<float>& ga = t.grad_buffer(pa);
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < n; ++c) {
        ga[r * n + c] += g[axis == 0 ? c : r] * scale;
      }
    }
  });
  return out;
}

}  // namespace

Tensor sum(const Tensor& a, int axis) { return reduce_axis(a, axis, false); }
Tensor mean(const Tensor& a, int axis) { return reduce_axis(a, axis, true); }

Tensor log_softmax(const Tensor& a) {
  require_rank2("log_softmax", a);
  const int m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({m, n});
  const float* av = a.data();
  float* ov = out.data();
  for (int r = 0; r < m; ++r) {
    const float* row = av + r * n;
    float mx = row[0];
    for (int c = 1; c < n; ++c) mx = std::max(mx, row[c]);
    double lse = 0.0;
    for (int c = 0; c < n; ++c) lse += std::exp(static_cast<double>(row[c] - mx));
    const float log_denom = mx + static_cast<float>(std::log(lse));
    for (int c = 0; c < n; ++c) ov[r * n + c] = row[c] - log_denom;
  }

  Rec rec(a);
  if (!rec.tape) return out;
  auto os = saved(out);
  rec.finish(out, [pa = rec.pa, os, m, n](GradTape& t, int self) {
    const std::vector<float>& g = t.grad_buffer(self);
    std::vector<float>& ga = t.grad_buffer(pa);
    const float* O = os->data();
    for (int r = 0; r < m; ++r) {
      double gsum = 0.0;
      for (int c = 0; c < n; ++c) gsum += g[r * n + c];
      for (int c = 0; c < n; ++c) {
        const float sm = std::exp(O[r * n + c]);
        ga[r * n + c] += g[r * n + c] - static_cast<float>(gsum) * sm;
      }
    }
  });
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank2("concat_cols", a);
  require_rank2("concat_cols", b);
  if (a.dim(0) != b.dim(0)) dim_fail("concat_cols", a, b);
  const int m = a.dim(0), na = a.dim(1), nb = b.dim(1);
  Tensor out = Tensor::zeros({m, na + nb});
  float* ov = out.data();
  const float* av = a.data();
  const float* bv = b.data();
  for (int r = 0; r < m; ++r) {
    std::memcpy(ov + r * (na + nb), av + r * na, sizeof(float) * na);
    std::memcpy(ov + r * (na + nb) + na, bv + r * nb, sizeof(float) * nb);
  }

  Rec rec(a, b);
  if (!rec.tape) return out;
  rec.finish(out, [pa = rec.pa, pb = rec.pb, m, na, nb](GradTape& t, int self) {
    const std::vector<float>& g = t.grad_buffer(self);
    if (pa >= 0) {
      std::vector<float>& ga = t.grad_buffer(pa);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < na; ++c) ga[r * na + c] += g[r * (na + nb) + c];
    }
    if (pb >= 0) {
      std::vector<float>& gb = t.grad_buffer(pb);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < nb; ++c) gb[r * nb + c] += g[r * (na + nb) + na + c];
    }
  });
  return out;
}

Tensor nll_loss(const Tensor& logprobs, const std::vector<int>& labels) {
  require_rank2("nll_loss", logprobs);
  const int m = logprobs.dim(0), n = logprobs.dim(1);
  if (static_cast<int>(labels.size()) != m) {
    throw DimensionError("nll_loss: label count " + std::to_string(labels.size()) +
                         " does not match batch " + std::to_string(m));
  }
  double acc = 0.0;
  const float* lp = logprobs.data();
  for (int r = 0; r < m; ++r) {
    const int y = labels[r];
    if (y < 0 || y >= n) throw InputError("nll_loss: label out of range");
    acc -= lp[r * n + y];
  }
  Tensor out = Tensor::scalar(static_cast<float>(acc / m));

  Rec rec(logprobs);
  if (!rec.tape) return out;
  rec.finish(out, [pa = rec.pa, labels, m, n](GradTape& t, int self) {
    const float g = t.grad_buffer(self)[0];
    std::vector<float>& ga = t.grad_buffer(pa);
    for (int r = 0; r < m; ++r) {
      ga[r * n + labels[r]] -= g / static_cast<float>(m);
    }
  });
  return out;
}

Tensor gaussian_unit_logprob_rows(const Tensor& x, const Tensor& mu) {
  require_rank2("gaussian_unit_logprob_rows", x);
  if (x.shape() != mu.shape()) dim_fail("gaussian_unit_logprob_rows", x, mu);
  const int m = x.dim(0), n = x.dim(1);
  constexpr float kLog2Pi = 1.8378770664093453f;
  Tensor out = Tensor::zeros({m});
  const float* xv = x.data();
  const float* mv = mu.data();
  float* ov = out.data();
  for (int r = 0; r < m; ++r) {
    double acc = 0.0;
    for (int c = 0; c < n; ++c) {
      const double d = static_cast<double>(xv[r * n + c]) - mv[r * n + c];
      acc += -0.5 * d * d;
    }
    ov[r] = static_cast<float>(acc) - 0.5f * kLog2Pi * n;
  }

  Rec rec(x, mu);
  if (!rec.tape) return out;
  auto xs = saved(x);
  auto ms = saved(mu);
  rec.finish(out, [pa = rec.pa, pb = rec.pb, xs, ms, m, n](GradTape& t, int self) {
    const std::vector<float>& g = t.grad_buffer(self);
    const float* X = xs->data();
    const float* M = ms->data();
    if (pb >= 0) {
      std::vector<float>& gm = t.grad_buffer(pb);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c)
          gm[r * n + c] += g[r] * (X[r * n + c] - M[r * n + c]);
    }
    if (pa >= 0) {
      std::vector<float>& gx = t.grad_buffer(pa);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c)
          gx[r * n + c] -= g[r] * (X[r * n + c] - M[r * n + c]);
    }
  });
  return out;
}

Tensor bernoulli_logprob_rows(const Tensor& x, const Tensor& logits) {
  require_rank2("bernoulli_logprob_rows", x);
  if (x.shape() != logits.shape()) dim_fail("bernoulli_logprob_rows", x, logits);
  const int m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({m});
  const float* xv = x.data();
  const float* lv = logits.data();
  float* ov = out.data();
  for (int r = 0; r < m; ++r) {
    double acc = 0.0;
    for (int c = 0; c < n; ++c) {
      const float l = lv[r * n + c];
      const float xx = xv[r * n + c];
      // x log s(l) + (1-x) log(1-s(l)) = -x softplus(-l) - (1-x) softplus(l)
      acc += -static_cast<double>(xx) * stable_softplus(-l) -
             (1.0 - xx) * stable_softplus(l);
    }
    ov[r] = static_cast<float>(acc);
  }

  Rec rec(x, logits);
  if (!rec.tape) return out;
  auto xs = saved(x);
  auto ls = saved(logits);
  rec.finish(out, [pa = rec.pa, pb = rec.pb, xs, ls, m, n](GradTape& t, int self) {
    const std::vector<float>& g = t.grad_buffer(self);
    const float* X = xs->data();
    const float* L = ls->data();
    if (pb >= 0) {
      std::vector<float>& gl = t.grad_buffer(pb);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c)
          gl[r * n + c] += g[r] * (X[r * n + c] - stable_sigmoid(L[r * n + c]));
    }
    if (pa >= 0) {
      std::vector<float>& gx = t.grad_buffer(pa);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) gx[r * n + c] += g[r] * L[r * n + c];
    }
  });
  return out;
}

// ---- finite differences ----

GradCheckResult grad_check(
    const std::function<Tensor()>& f,
    const std::vector<std::pair<std::string, Tensor*>>& params,
    float h, double eps_denom) {
  for (const auto& [name, p] : params) {
    if (!p->trainable()) {
      throw ContractError("grad_check: parameter '" + name + "' is not trainable");
    }
    p->zero_grad();
  }
  std::vector<std::vector<float>> analytic;
  {
    GradTape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  for (const auto& [name, p] : params) analytic.push_back(p->grad());

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi].second;
    for (int i = 0; i < p.numel(); ++i) {
      const float old = p.data()[i];
      p.data()[i] = old + h;
      const double f_plus = f().item();
      p.data()[i] = old - h;
      const double f_minus = f().item();
      p.data()[i] = old;
      const double numeric = (f_plus - f_minus) / (2.0 * static_cast<double>(h));
      const double a = analytic[pi][static_cast<std::size_t>(i)];
      const double rel = std::abs(a - numeric) / (std::abs(numeric) + eps_denom);
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = params[pi].first;
        res.worst_index = i;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace dlvae
