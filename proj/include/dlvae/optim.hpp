#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dlvae/tensor.hpp"

namespace dlvae {

struct AdamWConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;
};

// Decoupled-weight-decay Adam with bias correction. One instance per
// parameter group (the alternating scheme keeps two, with separate rates).
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor*>> params, AdamWConfig cfg);

  // applies one update from the accumulated gradients; does not zero them
  void step();
  void zero_grad();

  std::int64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  void set_lr(float lr) { cfg_.lr = lr; }

 private:
  std::vector<std::pair<std::string, Tensor*>> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::int64_t t_ = 0;
  AdamWConfig cfg_;
};

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm. Returns the scale applied (1.0 when within bound). If any
// gradient is non-finite, returns NaN and leaves gradients untouched so the
// caller can skip the step.
float clip_grad_norm(const std::vector<std::pair<std::string, Tensor*>>& params,
                     float max_norm);

}  // namespace dlvae
