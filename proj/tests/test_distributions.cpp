#include "doctest.h"

#include <cmath>

#include "dlvae/distributions.hpp"
#include "dlvae/rng.hpp"
#include "oracle_helpers.hpp"

using namespace dlvae;

TEST_CASE("diagonal gaussian kl closed forms against quadrature") {
  DiagGaussian std_normal{{0.0}, {1.0}};
  CHECK(kl_diag_gaussians(std_normal, std_normal) == doctest::Approx(0.0).epsilon(1e-12));

  // oracle: direct quadrature of q log(q/p)
  auto quad_kl = [](double mq, double vq, double mp, double vp) {
    return oracle::trapezoid(
        [&](double x) {
          const double q = oracle::normal_pdf(x, mq, vq);
          const double p = oracle::normal_pdf(x, mp, vp);
          return q * (std::log(q) - std::log(p));
        },
        mq - 14 * std::sqrt(vq), mq + 14 * std::sqrt(vq), 100000);
  };

  DiagGaussian shifted{{1.0}, {1.0}};
  CHECK(kl_diag_gaussians(shifted, std_normal) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(kl_diag_gaussians(shifted, std_normal) ==
        doctest::Approx(quad_kl(1, 1, 0, 1)).epsilon(1e-6));

  DiagGaussian wide{{0.0}, {2.0}};
  const double expect = 0.5 * (2.0 - 1.0 - std::log(2.0));
  CHECK(kl_diag_gaussians(wide, std_normal) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(expect == doctest::Approx(0.1534).epsilon(1e-3));
  CHECK(kl_diag_gaussians(wide, std_normal) ==
        doctest::Approx(quad_kl(0, 2, 0, 1)).epsilon(1e-6));

  CHECK_THROWS_AS(kl_diag_gaussians(std_normal, DiagGaussian{{0, 0}, {1, 1}}),
                  ContractError);
  CHECK_THROWS_AS(kl_diag_gaussians(DiagGaussian{{0}, {0.0}}, std_normal),
                  DomainError);
}

TEST_CASE("kl nonnegative on random pairs, zero iff equal") {
  Rng rng(21);
  for (int i = 0; i < 1000; ++i) {
    const int d = 1 + rng.uniform_int(4);
    DiagGaussian q, p;
    for (int j = 0; j < d; ++j) {
      q.mu.push_back(rng.normal() * 2);
      p.mu.push_back(rng.normal() * 2);
      q.var.push_back(0.05 + 3 * rng.uniform_double());
      p.var.push_back(0.05 + 3 * rng.uniform_double());
    }
    CHECK(kl_diag_gaussians(q, p) >= 0.0);
    CHECK(kl_diag_gaussians(q, q) == doctest::Approx(0.0).epsilon(1e-6));
  }
}

TEST_CASE("diag gaussian log density") {
  DiagGaussian std_normal{{0.0}, {1.0}};
  CHECK(logprob_diag_gaussian(std_normal, {0.0}) ==
        doctest::Approx(-0.9189385332).epsilon(1e-9));
  CHECK(logprob_diag_gaussian(std_normal, {1.0}) ==
        doctest::Approx(-1.4189385332).epsilon(1e-9));

  DiagGaussian joint{{0.3, -1.0, 2.0}, {0.5, 1.5, 2.5}};
  double sum = 0.0;
  for (int j = 0; j < 3; ++j) {
    DiagGaussian marg{{joint.mu[j]}, {joint.var[j]}};
    sum += logprob_diag_gaussian(marg, {0.1 * j});
  }
  CHECK(logprob_diag_gaussian(joint, {0.0, 0.1, 0.2}) ==
        doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("reparameterized sampling") {
  Tensor mu = Tensor::from_data({2, 2}, {1, -2, 0.5f, 3});
  Tensor var = Tensor::full({2, 2}, 0.25f);
  Tensor eps0 = Tensor::zeros({2, 2});
  Tensor s = reparam_sample(mu, var, eps0);
  for (int i = 0; i < 4; ++i) CHECK(s.at(i) == mu.at(i));  // eps=0 -> exactly mu

  // variance at the clamp floor: sample ~ mu regardless of eps
  Tensor tiny = Tensor::full({2, 2}, 1e-6f);
  Tensor eps_big = Tensor::full({2, 2}, 3.0f);
  Tensor s2 = reparam_sample(mu, tiny, eps_big);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(s2.at(i) - mu.at(i)) < 4e-3f);

  // MC mean of N(2, 0.25): SE = 0.5/sqrt(1e5) ~ 1.6e-3, bound 0.01 is ~6 SE
  Rng rng(404);
  const int n = 100000;
  Tensor m = Tensor::full({n, 1}, 2.0f);
  Tensor v = Tensor::full({n, 1}, 0.25f);
  Tensor eps = Tensor::zeros({n, 1});
  rng.fill_normal(eps.data(), n);
  Tensor draw = reparam_sample(m, v, eps);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += draw.at(i);
  CHECK(std::abs(acc / n - 2.0) < 0.01);

  // gradient w.r.t. mu is the identity
  Tensor mu_t = Tensor::from_data({2, 2}, {0, 1, 2, 3}).set_trainable();
  {
    GradTape tape;
    TapeScope scope(tape);
    tape.backward(sum(reparam_sample(mu_t, var, eps_big)));
  }
  for (int i = 0; i < 4; ++i) CHECK(mu_t.grad()[i] == 1.0f);
}

TEST_CASE("truncated gaussian log density") {
  // x=0, y=1: normalizer Phi(0)=1/2, so logpdf = logN(w;0,1/2) + ln 2
  TruncGaussian1D t{0.0, 0.5, TruncSide::Positive};
  for (double w : {0.1, 0.5, 1.7}) {
    const double expect = std::log(oracle::normal_pdf(w, 0.0, 0.5)) + std::log(2.0);
    CHECK(trunc_gaussian_logpdf(t, w) == doctest::Approx(expect).epsilon(1e-10));
  }
  // density at 0.5 is twice the untruncated density
  CHECK(std::exp(trunc_gaussian_logpdf(t, 0.5)) ==
        doctest::Approx(2.0 * oracle::normal_pdf(0.5, 0.0, 0.5)).epsilon(1e-10));
  CHECK(std::isinf(trunc_gaussian_logpdf(t, -0.2)));
  CHECK(trunc_gaussian_logpdf(t, -0.2) < 0);

  TruncGaussian1D tn{0.0, 0.5, TruncSide::Negative};
  CHECK(std::isinf(trunc_gaussian_logpdf(tn, 0.4)));
  CHECK(std::isfinite(trunc_gaussian_logpdf(tn, -0.4)));
}

TEST_CASE("truncated density integrates to one") {
  Rng rng(88);
  for (int trial = 0; trial < 20; ++trial) {
    const double x = 4.0 * rng.uniform_double() - 2.0;
    TruncGaussian1D t{x / 2.0, 0.5,
                      trial % 2 ? TruncSide::Positive : TruncSide::Negative};
    const double sigma = std::sqrt(t.var);
    double lo, hi;
    if (t.side == TruncSide::Positive) {
      lo = 0.0;
      hi = std::max(0.0, t.mu) + 12 * sigma;
    } else {
      lo = std::min(0.0, t.mu) - 12 * sigma;
      // stay inside the open end: the density jumps to 0 at w = 0 and a grid
      // point exactly on the boundary would lose half a trapezoid of mass
      hi = -1e-9;
    }
    const double mass = oracle::trapezoid(
        [&](double w) { return std::exp(trunc_gaussian_logpdf(t, w)); }, lo, hi,
        10000);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("stable log cdf against erfc and continuity at the branch") {
  for (double t : {-7.9, -5.0, -2.0, 0.0, 1.0, 3.0}) {
    CHECK(log_normal_cdf(t) ==
          doctest::Approx(std::log(oracle::normal_cdf(t))).epsilon(1e-12));
  }
  // deep tail: erfc still representable at -12, compare directly
  CHECK(log_normal_cdf(-12.0) ==
        doctest::Approx(std::log(oracle::normal_cdf(-12.0))).epsilon(1e-6));
  // continuity across the asymptotic switch at -8
  CHECK(log_normal_cdf(-8.0001) == doctest::Approx(log_normal_cdf(-7.9999)).epsilon(1e-4));
  // no underflow far out
  CHECK(std::isfinite(log_normal_cdf(-100.0)));
  CHECK(log_normal_cdf(-100.0) < -4000.0);
}

TEST_CASE("monte carlo kl to truncated gaussian") {
  Rng rng(555);

  // q matches the untruncated shape and the truncation removes ~no mass
  TruncGaussian1D far{6.0, 0.5, TruncSide::Positive};
  double se = 0.0;
  const double kl_far = kl_gaussian_to_truncated(6.0, 0.5, far, 20000, rng, &se);
  CHECK(std::abs(kl_far) < 1e-6);

  // q = N(0.5, 0.5) against positive-truncated N(0, 0.5)
  TruncGaussian1D t{0.0, 0.5, TruncSide::Positive};
  const double est = kl_gaussian_to_truncated(0.5, 0.5, t, 200000, rng, &se);
  const double quad = kl_gaussian_to_truncated_quad(0.5, 0.5, t);
  // independent trapezoid oracle for the same capped integrand, split at the
  // cap discontinuity
  auto integrand = [&](double w) {
    const double q = oracle::normal_pdf(w, 0.5, 0.5);
    const double lp = std::max(trunc_gaussian_logpdf(t, w), kLogDensityFloor);
    return q * (std::log(q) - lp);
  };
  const double s = std::sqrt(0.5);
  const double quad_oracle =
      oracle::trapezoid(integrand, 0.5 - 14 * s, -1e-12, 100000) +
      oracle::trapezoid(integrand, 0.0, 0.5 + 14 * s, 100000);
  CHECK(quad == doctest::Approx(quad_oracle).epsilon(1e-5));
  CHECK(std::abs(est - quad) < 2.5 * se);

  CHECK_THROWS_AS(kl_gaussian_to_truncated(0.0, 1.0, t, 100, rng), ContractError);
}

TEST_CASE("doubling samples halves estimator variance") {
  TruncGaussian1D t{0.2, 0.5, TruncSide::Positive};
  auto variance_at = [&](int n, std::uint64_t seed) {
    Rng rng(seed);
    double acc = 0.0, acc2 = 0.0;
    const int reps = 50;
    for (int r = 0; r < reps; ++r) {
      const double v = kl_gaussian_to_truncated(0.4, 0.4, t, n, rng);
      acc += v;
      acc2 += v * v;
    }
    const double mean = acc / reps;
    return acc2 / reps - mean * mean;
  };
  const double v1 = variance_at(1000, 9001);
  const double v2 = variance_at(2000, 9002);
  const double ratio = v1 / v2;
  CHECK(ratio > 1.3);
  CHECK(ratio < 3.1);
}

TEST_CASE("taped kl rows match the double-precision closed form") {
  Rng rng(31);
  const int B = 5, d = 3;
  Tensor mu = Tensor::zeros({B, d});
  Tensor var = Tensor::zeros({B, d});
  Tensor pm = Tensor::zeros({B, d});
  rng.fill_uniform(mu.data(), B * d, -2.0f, 2.0f);
  rng.fill_uniform(var.data(), B * d, 0.2f, 2.5f);
  rng.fill_uniform(pm.data(), B * d, -1.0f, 1.0f);

  Tensor k0 = kl_std_normal_rows(mu, var);
  Tensor kp = kl_unit_var_prior_rows(mu, var, pm);
  for (int i = 0; i < B; ++i) {
    DiagGaussian q, p0, pp;
    for (int j = 0; j < d; ++j) {
      q.mu.push_back(mu.at(i, j));
      q.var.push_back(var.at(i, j));
      p0.mu.push_back(0.0);
      p0.var.push_back(1.0);
      pp.mu.push_back(pm.at(i, j));
      pp.var.push_back(1.0);
    }
    CHECK(k0.at(i) == doctest::Approx(kl_diag_gaussians(q, p0)).epsilon(2e-5));
    CHECK(kp.at(i) == doctest::Approx(kl_diag_gaussians(q, pp)).epsilon(2e-5));
  }

  // gradients flow and match finite differences
  Tensor mu_t = mu.clone().set_trainable();
  Tensor var_t = var.clone().set_trainable();
  auto f = [&] { return mean(kl_unit_var_prior_rows(mu_t, var_t, pm)); };
  auto res = grad_check(f, {{"mu", &mu_t}, {"var", &var_t}}, 1e-2f);
  CHECK(res.max_rel_err < 1e-3);
}
