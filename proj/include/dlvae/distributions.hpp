#pragma once

#include <vector>

#include "dlvae/rng.hpp"
#include "dlvae/tensor.hpp"

namespace dlvae {

// Diagonal Gaussian over R^d. Double precision: this type backs evaluation
// oracles; the fp32 training-path expressions live below as tensor builders.
struct DiagGaussian {
  std::vector<double> mu;
  std::vector<double> var;
};

// closed-form KL(q || p) for diagonal Gaussians
double kl_diag_gaussians(const DiagGaussian& q, const DiagGaussian& p);

double logprob_diag_gaussian(const DiagGaussian& q, const std::vector<double>& x);

// One-dimensional Gaussian truncated at 0, keeping either the positive or
// the negative half line.
enum class TruncSide { Positive, Negative };

struct TruncGaussian1D {
  double mu = 0.0;
  double var = 1.0;
  TruncSide side = TruncSide::Positive;

  bool in_support(double w) const {
    return side == TruncSide::Positive ? w >= 0.0 : w < 0.0;
  }
};

// log Phi(t), stable for deep negative arguments (asymptotic branch t < -8)
double log_normal_cdf(double t);

// log density; -inf outside support
double trunc_gaussian_logpdf(const TruncGaussian1D& t, double w);

// Log densities outside the support are capped at this finite value so the
// Monte Carlo KL below stays finite.
inline constexpr double kLogDensityFloor = -30.0;

// E_q[log q - log t] by Monte Carlo, out-of-support samples capped at
// kLogDensityFloor. n_samples >= 1000 required. Optionally reports the
// standard error of the estimate.
double kl_gaussian_to_truncated(double q_mu, double q_var,
                                const TruncGaussian1D& t, int n_samples,
                                Rng& rng, double* se_out = nullptr);

// Same divergence by 1-D quadrature (composite Simpson split at the support
// boundary so the capped integrand stays smooth piecewise). `intervals` is
// the subdivision count per smooth piece.
double kl_gaussian_to_truncated_quad(double q_mu, double q_var,
                                     const TruncGaussian1D& t,
                                     int intervals = 4000);

// closed form KL(N(mu_q, var_q) || N(mu_p, var_p)) in 1-D
double kl_gaussian_1d(double mu_q, double var_q, double mu_p, double var_p);

// ---- taped batch expressions (fp32, rows = samples) ----

// mu + sqrt(var) * eps elementwise; gradient flows to mu and var
Tensor reparam_sample(const Tensor& mu, const Tensor& var, const Tensor& eps);

// per-row KL(N(mu_i, var_i) || N(0, I)), shape [B]
Tensor kl_std_normal_rows(const Tensor& mu, const Tensor& var);

// per-row KL(N(mu_i, var_i) || N(prior_mu_i, I)), shape [B]
Tensor kl_unit_var_prior_rows(const Tensor& mu, const Tensor& var,
                              const Tensor& prior_mu);

}  // namespace dlvae
