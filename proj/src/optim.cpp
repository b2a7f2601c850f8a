#include "dlvae/optim.hpp"

#include <cmath>

#include "dlvae/errors.hpp"

namespace dlvae {

AdamW::AdamW(std::vector<std::pair<std::string, Tensor*>> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, p] : params_) {
    if (!p->trainable()) {
      throw ContractError("adamw: missing gradient buffer for parameter '" + name + "'");
    }
    m_.emplace_back(static_cast<std::size_t>(p->numel()), 0.0f);
    v_.emplace_back(static_cast<std::size_t>(p->numel()), 0.0f);
  }
}

void AdamW::step() {
  ++t_;
  const float bc1 = 1.0f - static_cast<float>(std::pow(cfg_.beta1, static_cast<double>(t_)));
  const float bc2 = 1.0f - static_cast<float>(std::pow(cfg_.beta2, static_cast<double>(t_)));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = *params_[pi].second;
    if (!p.trainable()) {
      throw ContractError("adamw_step: missing gradient for parameter '" +
                          params_[pi].first + "'");
    }
    const std::vector<float>& g = p.grad();
    std::vector<float>& m = m_[pi];
    std::vector<float>& v = v_[pi];
    float* w = p.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (cfg_.weight_decay != 0.0f) {
        w[i] -= cfg_.lr * cfg_.weight_decay * w[i];
      }
      m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
      const float m_hat = m[i] / bc1;
      const float v_hat = v[i] / bc2;
      w[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (const auto& [name, p] : params_) p->zero_grad();
}

float clip_grad_norm(const std::vector<std::pair<std::string, Tensor*>>& params,
                     float max_norm) {
  if (!(max_norm > 0.0f)) {
    throw ContractError("clip_grad_norm: max_norm must be positive");
  }
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    for (float g : p->grad()) {
      if (!std::isfinite(g)) return std::nanf("");
      sq += static_cast<double>(g) * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return 1.0f;
  const float scale = static_cast<float>(max_norm / norm);
  for (const auto& [name, p] : params) {
    for (float& g : p->grad()) g *= scale;
  }
  return scale;
}

}  // namespace dlvae
