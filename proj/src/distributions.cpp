#include "dlvae/distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "dlvae/errors.hpp"

namespace dlvae {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_vars(const char* op, const DiagGaussian& g) {
  for (double v : g.var) {
    if (!(v > 0.0)) {
      throw DomainError(std::string(op) + ": non-positive variance");
    }
  }
}

double log_normal_pdf(double x, double mu, double var) {
  const double d = x - mu;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

}  // namespace

double kl_diag_gaussians(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.mu.size() != q.var.size() || p.mu.size() != p.var.size() ||
      q.mu.size() != p.mu.size()) {
    throw ContractError("kl_diag_gaussians: dimension mismatch");
  }
  check_vars("kl_diag_gaussians", q);
  check_vars("kl_diag_gaussians", p);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.mu.size(); ++i) {
    const double dm = q.mu[i] - p.mu[i];
    acc += 0.5 * (std::log(p.var[i] / q.var[i]) +
                  (q.var[i] + dm * dm) / p.var[i] - 1.0);
  }
  return acc;
}

double logprob_diag_gaussian(const DiagGaussian& q, const std::vector<double>& x) {
  if (q.mu.size() != q.var.size() || q.mu.size() != x.size()) {
    throw ContractError("logprob_diag_gaussian: dimension mismatch");
  }
  check_vars("logprob_diag_gaussian", q);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += log_normal_pdf(x[i], q.mu[i], q.var[i]);
  }
  return acc;
}

double log_normal_cdf(double t) {
  if (t > -8.0) {
    return std::log(0.5 * std::erfc(-t / std::numbers::sqrt2));
  }
  // asymptotic expansion of Phi(t) for deep left tail:
  // Phi(t) ~ phi(t)/(-t) * (1 - 1/t^2 + 3/t^4 - 15/t^6 + 105/t^8)
  const double t2 = t * t;
  const double series =
      1.0 - 1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2) +
      105.0 / (t2 * t2 * t2 * t2);
  return -0.5 * t2 - 0.5 * kLog2Pi - std::log(-t) + std::log(series);
}

double trunc_gaussian_logpdf(const TruncGaussian1D& t, double w) {
  if (!(t.var > 0.0)) throw DomainError("trunc_gaussian_logpdf: non-positive variance");
  if (!t.in_support(w)) return -std::numeric_limits<double>::infinity();
  const double sigma = std::sqrt(t.var);
  // mass of the kept half line: Positive keeps P(W >= 0) = Phi(mu/sigma),
  // Negative keeps P(W < 0) = Phi(-mu/sigma)
  const double log_mass = t.side == TruncSide::Positive
                              ? log_normal_cdf(t.mu / sigma)
                              : log_normal_cdf(-t.mu / sigma);
  return log_normal_pdf(w, t.mu, t.var) - log_mass;
}

double kl_gaussian_to_truncated(double q_mu, double q_var,
                                const TruncGaussian1D& t, int n_samples,
                                Rng& rng, double* se_out) {
  if (n_samples < 1000) {
    throw ContractError("kl_gaussian_to_truncated: n_samples must be >= 1000");
  }
  if (!(q_var > 0.0)) throw DomainError("kl_gaussian_to_truncated: non-positive variance");
  const double sigma = std::sqrt(q_var);
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const double w = q_mu + sigma * static_cast<double>(rng.normal());
    const double lq = log_normal_pdf(w, q_mu, q_var);
    const double lt = std::max(trunc_gaussian_logpdf(t, w), kLogDensityFloor);
    const double term = lq - lt;
    acc += term;
    acc2 += term * term;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = acc / n;
  if (se_out) {
    const double var = std::max(acc2 / n - mean * mean, 0.0);
    *se_out = std::sqrt(var / n);
  }
  return mean;
}

namespace {

// composite Simpson over [a, b]; assumes the integrand is smooth there
template <class F>
double simpson(F f, double a, double b, int intervals) {
  if (b <= a) return 0.0;
  if (intervals % 2) ++intervals;
  const double h = (b - a) / intervals;
  double acc = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) {
    acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  }
  return acc * h / 3.0;
}

}  // namespace

double kl_gaussian_to_truncated_quad(double q_mu, double q_var,
                                     const TruncGaussian1D& t, int intervals) {
  if (!(q_var > 0.0)) {
    throw DomainError("kl_gaussian_to_truncated_quad: non-positive variance");
  }
  if (intervals < 8) {
    throw ContractError("kl_gaussian_to_truncated_quad: too few intervals");
  }
  const double sigma = std::sqrt(q_var);
  const double lo = q_mu - 12.0 * sigma;
  const double hi = q_mu + 12.0 * sigma;
  auto integrand = [&](double w) {
    const double lq = log_normal_pdf(w, q_mu, q_var);
    const double lt = std::max(trunc_gaussian_logpdf(t, w), kLogDensityFloor);
    return std::exp(lq) * (lq - lt);
  };
  // Split at the truncation point: the capped integrand jumps at 0. The left
  // piece must stop just short of 0 so its endpoint is evaluated on the
  // negative-side branch (for either truncation side the branch at exactly 0
  // belongs to the right piece).
  if (lo < 0.0 && hi > 0.0) {
    return simpson(integrand, lo, -1e-12, intervals) +
           simpson(integrand, 0.0, hi, intervals);
  }
  return simpson(integrand, lo, hi, 2 * intervals);
}

double kl_gaussian_1d(double mu_q, double var_q, double mu_p, double var_p) {
  DiagGaussian q{{mu_q}, {var_q}};
  DiagGaussian p{{mu_p}, {var_p}};
  return kl_diag_gaussians(q, p);
}

Tensor reparam_sample(const Tensor& mu, const Tensor& var, const Tensor& eps) {
  return add(mu, mul(dlvae::sqrt(var), eps));
}

Tensor kl_std_normal_rows(const Tensor& mu, const Tensor& var) {
  Tensor terms = sub(add_scalar(add(var, square(mu)), -1.0f), dlvae::log(var));
  return mul_scalar(sum(terms, 1), 0.5f);
}

Tensor kl_unit_var_prior_rows(const Tensor& mu, const Tensor& var,
                              const Tensor& prior_mu) {
  Tensor terms =
      sub(add_scalar(add(var, square(sub(mu, prior_mu))), -1.0f), dlvae::log(var));
  return mul_scalar(sum(terms, 1), 0.5f);
}

}  // namespace dlvae
