#include "doctest.h"

#include <cmath>
#include <cstring>

#include "dlvae/rng.hpp"
#include "dlvae/tensor.hpp"

using namespace dlvae;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, float lo = -2.0f, float hi = 2.0f) {
  Tensor t = Tensor::zeros(std::move(shape));
  rng.fill_uniform(t.data(), static_cast<std::size_t>(t.numel()), lo, hi);
  return t;
}

// scalar wrapper sum(op_out * r) so the VJP sees non-uniform upstream grads
Tensor weighted(const Tensor& out, const Tensor& r) { return sum(mul(out, r)); }

// Test-local finite-difference oracle, independent of grad_check. Uses the
// allclose criterion |a - n| <= atol + rtol * |n|: with an fp32 forward pass
// a pure relative error is ill-posed wherever the true gradient crosses zero.
// Returns the worst ratio |a - n| / (atol + rtol * |n|); <= 1 passes.
double fd_worst_ratio(const std::function<Tensor()>& f, Tensor& param,
                      float h = 1e-2f, double rtol = 1e-3, double atol = 1e-4) {
  param.zero_grad();
  {
    GradTape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  std::vector<float> analytic = param.grad();
  double worst = 0.0;
  for (int i = 0; i < param.numel(); ++i) {
    const float old = param.data()[i];
    param.data()[i] = old + h;
    const double fp = f().item();
    param.data()[i] = old - h;
    const double fm = f().item();
    param.data()[i] = old;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic[static_cast<std::size_t>(i)];
    worst = std::max(worst, std::abs(a - numeric) / (atol + rtol * std::abs(numeric)));
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul values") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8});

  Tensor ia = matmul(eye, a);
  for (int i = 0; i < 4; ++i) CHECK(ia.at(i) == a.at(i));

  Tensor ab = matmul(a, b);
  CHECK(ab.at(0, 0) == 19.0f);
  CHECK(ab.at(0, 1) == 22.0f);
  CHECK(ab.at(1, 0) == 43.0f);
  CHECK(ab.at(1, 1) == 50.0f);

  CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), DimensionError);
}

TEST_CASE("matmul gradient is ones times B transpose") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng).set_trainable();
  Tensor b = random_tensor({4, 2}, rng);

  {
    GradTape tape;
    TapeScope scope(tape);
    tape.backward(sum(matmul(a, b)));
  }
  // d sum(AB) / dA = ones * B^T, i.e. row r of grad = column sums of B rows
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      float expect = 0.0f;
      for (int j = 0; j < 2; ++j) expect += b.at(c, j);
      CHECK(std::abs(a.grad()[r * 4 + c] - expect) < 1e-5f);
    }
  }

  auto res = grad_check([&] { return sum(matmul(a, b)); }, {{"a", &a}});
  CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("elementwise closed-form values") {
  Tensor zero = Tensor::scalar(0.0f);
  CHECK(softplus(zero).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(sigmoid(zero).item() == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(relu(Tensor::scalar(-3.0f)).item() == 0.0f);
  CHECK(tanh(zero).item() == 0.0f);
  CHECK(square(Tensor::scalar(-2.5f)).item() == doctest::Approx(6.25));
  CHECK(dlvae::sqrt(Tensor::scalar(9.0f)).item() == doctest::Approx(3.0));
  CHECK(dlvae::exp(Tensor::scalar(1.0f)).item() ==
        doctest::Approx(std::exp(1.0)).epsilon(1e-6));
}

TEST_CASE("softplus derivative matches manual finite differences") {
  // independent of grad_check: hand-rolled central difference at x = 1.5
  const double h = 1e-3;
  const double fp = std::log1p(std::exp(1.5 + h));
  const double fm = std::log1p(std::exp(1.5 - h));
  const double numeric = (fp - fm) / (2 * h);

  Tensor x = Tensor::scalar(1.5f).set_trainable();
  {
    GradTape tape;
    TapeScope scope(tape);
    tape.backward(softplus(x));
  }
  const double analytic = x.grad()[0];
  const double expect = 1.0 / (1.0 + std::exp(-1.5));
  CHECK(std::abs(analytic - numeric) < 1e-4);
  CHECK(std::abs(analytic - expect) < 1e-6);
}

TEST_CASE("domain errors on log sqrt div") {
  Tensor bad = Tensor::from_data({2}, {1.0f, -0.5f});
  CHECK_THROWS_AS(dlvae::log(bad), DomainError);
  CHECK_THROWS_AS(dlvae::sqrt(bad), DomainError);
  Tensor z = Tensor::from_data({2}, {1.0f, 0.0f});
  CHECK_THROWS_AS(div(Tensor::from_data({2}, {1, 1}), z), DomainError);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), DimensionError);
}

TEST_CASE("reductions") {
  Tensor v = Tensor::from_data({3}, {1, 2, 3});
  CHECK(sum(v).item() == 6.0f);
  CHECK(mean(v).item() == 2.0f);

  Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor m0 = mean(m, 0);
  CHECK(m0.shape() == Shape{2});
  CHECK(m0.at(0) == 2.0f);
  CHECK(m0.at(1) == 3.0f);
  Tensor s1 = sum(m, 1);
  CHECK(s1.at(0) == 3.0f);
  CHECK(s1.at(1) == 7.0f);
  CHECK_THROWS_AS(sum(m, 2), DimensionError);

  Tensor x = Tensor::from_data({4}, {0.5f, -1, 2, 7}).set_trainable();
  {
    GradTape tape;
    TapeScope scope(tape);
    tape.backward(mean(x));
  }
  for (int i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(0.25));
}

TEST_CASE("backward basics") {
  Tensor x = Tensor::scalar(3.0f).set_trainable();
  {
    GradTape tape;
    TapeScope scope(tape);
    tape.backward(square(x));
  }
  CHECK(x.grad()[0] == doctest::Approx(6.0));

  Tensor w = Tensor::from_data({2, 3}, {1, 1, 1, 1, 1, 1}).set_trainable();
  Tensor v = Tensor::from_data({3, 1}, {2, 5, 7});
  {
    GradTape tape;
    TapeScope scope(tape);
    tape.backward(sum(matmul(w, v)));
  }
  // d sum(Wv)/dW = 1 * v^T replicated per row
  for (int r = 0; r < 2; ++r) {
    CHECK(w.grad()[r * 3 + 0] == doctest::Approx(2));
    CHECK(w.grad()[r * 3 + 1] == doctest::Approx(5));
    CHECK(w.grad()[r * 3 + 2] == doctest::Approx(7));
  }

  GradTape tape;
  TapeScope scope(tape);
  Tensor loss = square(x);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), ContractError);  // tape is consumed
}

TEST_CASE("non-scalar loss rejected") {
  Tensor x = Tensor::from_data({3}, {1, 2, 3}).set_trainable();
  GradTape tape;
  TapeScope scope(tape);
  Tensor y = square(x);
  CHECK_THROWS_AS(tape.backward(y), DimensionError);
}

TEST_CASE("three layer mlp with 17 parameters passes gradcheck") {
  Rng rng(42);
  Tensor w1 = random_tensor({3, 2}, rng, -0.7f, 0.7f).set_trainable();
  Tensor b1 = random_tensor({2}, rng, -0.3f, 0.3f).set_trainable();
  Tensor w2 = random_tensor({2, 2}, rng, -0.7f, 0.7f).set_trainable();
  Tensor b2 = random_tensor({2}, rng, -0.3f, 0.3f).set_trainable();
  Tensor w3 = random_tensor({2, 1}, rng, -0.7f, 0.7f).set_trainable();
  Tensor b3 = random_tensor({1}, rng, -0.3f, 0.3f).set_trainable();
  const int n_params = w1.numel() + b1.numel() + w2.numel() + b2.numel() +
                       w3.numel() + b3.numel();
  CHECK(n_params == 17);

  Tensor x = random_tensor({5, 3}, rng);
  auto f = [&] {
    Tensor h1 = dlvae::tanh(add(matmul(x, w1), b1));
    Tensor h2 = dlvae::tanh(add(matmul(h1, w2), b2));
    return mean(add(matmul(h2, w3), b3));
  };
  // h balances fp32 forward rounding against truncation for a 3-layer net
  auto res = grad_check(f, {{"w1", &w1}, {"b1", &b1}, {"w2", &w2},
                            {"b2", &b2}, {"w3", &w3}, {"b3", &b3}},
                        1e-2f);
  INFO("worst ", res.worst_param, "[", res.worst_index, "] analytic ",
       res.analytic, " numeric ", res.numeric);
  CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("grad_check trivial cases") {
  Rng rng(7);
  Tensor p = random_tensor({6}, rng, 0.5f, 1.5f).set_trainable();
  // f is exactly quadratic: central differences are exact for any h, so a
  // large step drowns fp32 rounding and the error is ~1e-7
  auto quad = [&] { return sum(square(p)); };
  CHECK(grad_check(quad, {{"p", &p}}, 1.0f).max_rel_err < 1e-6);

  auto constant = [&] { return mul_scalar(sum(mul_scalar(p, 0.0f)), 1.0f); };
  CHECK(grad_check(constant, {{"p", &p}}).max_rel_err == 0.0);
}

TEST_CASE("every op matches finite differences on random inputs") {
  Rng rng(1234);
  const int kTrials = 100;
  double worst = 0.0;
  std::string worst_op;

  auto run = [&](const char* name, auto&& build, Tensor& param) {
    const double ratio = fd_worst_ratio(build, param);
    if (ratio > worst) {
      worst = ratio;
      worst_op = name;
    }
  };

  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor r = random_tensor({2, 3}, rng, 0.2f, 1.0f);
    Tensor rv = random_tensor({2}, rng, 0.2f, 1.0f);

    {
      Tensor a = random_tensor({2, 3}, rng).set_trainable();
      Tensor b = random_tensor({2, 3}, rng);
      run("add", [&] { return weighted(add(a, b), r); }, a);
      run("sub", [&] { return weighted(sub(a, b), r); }, a);
      run("mul", [&] { return weighted(mul(a, b), r); }, a);
      run("neg", [&] { return weighted(neg(a), r); }, a);
      run("square", [&] { return weighted(square(a), r); }, a);
      run("tanh", [&] { return weighted(dlvae::tanh(a), r); }, a);
      run("sigmoid", [&] { return weighted(sigmoid(a), r); }, a);
      run("softplus", [&] { return weighted(softplus(a), r); }, a);
      run("exp", [&] { return weighted(dlvae::exp(a), r); }, a);
      run("add_scalar", [&] { return weighted(add_scalar(a, 0.37f), r); }, a);
      run("mul_scalar", [&] { return weighted(mul_scalar(a, -1.21f), r); }, a);
      Tensor r3 = random_tensor({3}, rng);
      run("sum_axis0", [&] { return weighted(sum(a, 0), r3); }, a);
      run("mean_axis1", [&] { return weighted(mean(a, 1), rv); }, a);
      run("log_softmax", [&] { return weighted(log_softmax(a), r); }, a);
      run("mean_full", [&] { return mean(a); }, a);
    }
    {
      // keep clear of the relu/clamp kinks so FD is valid
      Tensor a = random_tensor({2, 3}, rng, 0.1f, 2.0f);
      for (int i = 0; i < a.numel(); ++i) {
        if (rng.uniform() < 0.5f) a.data()[i] = -a.data()[i];
      }
      a.set_trainable();
      run("relu", [&] { return weighted(relu(a), r); }, a);
      run("clamp_min", [&] { return weighted(clamp_min(a, 0.05f), r); }, a);
    }
    {
      Tensor pos = random_tensor({2, 3}, rng, 0.3f, 3.0f).set_trainable();
      run("log", [&] { return weighted(dlvae::log(pos), r); }, pos);
      run("sqrt", [&] { return weighted(dlvae::sqrt(pos), r); }, pos);
    }
    {
      Tensor a = random_tensor({2, 3}, rng).set_trainable();
      Tensor b = random_tensor({2, 3}, rng, 0.5f, 1.5f);
      if (trial % 2) {
        for (int i = 0; i < b.numel(); ++i) b.data()[i] = -b.data()[i];
      }
      run("div_num", [&] { return weighted(div(a, b), r); }, a);
      Tensor bb = b.clone().set_trainable();
      run("div_den", [&] { return weighted(div(a, bb), r); }, bb);
    }
    {
      Tensor a = random_tensor({3, 2}, rng).set_trainable();
      Tensor b = random_tensor({2, 4}, rng);
      Tensor rr = random_tensor({3, 4}, rng);
      run("matmul_a", [&] { return weighted(matmul(a, b), rr); }, a);
      Tensor bb = b.clone().set_trainable();
      run("matmul_b", [&] { return weighted(matmul(a.detached(), bb), rr); }, bb);
    }
    {
      Tensor a = random_tensor({2, 3}, rng).set_trainable();
      Tensor bias = random_tensor({3}, rng).set_trainable();
      run("bias_row", [&] { return weighted(add(a, bias), r); }, a);
      run("bias_vec", [&] { return weighted(add(a, bias), r); }, bias);
      Tensor c = random_tensor({2, 2}, rng);
      Tensor rc = random_tensor({2, 5}, rng);
      run("concat", [&] { return weighted(concat_cols(a, c), rc); }, a);
    }
    {
      Tensor lp = random_tensor({3, 4}, rng).set_trainable();
      std::vector<int> labels = {rng.uniform_int(4), rng.uniform_int(4),
                                 rng.uniform_int(4)};
      run("nll", [&] { return nll_loss(log_softmax(lp), labels); }, lp);
    }
    {
      // keep x - mu and x - sigmoid(l) away from 0 so the true gradient is
      // not degenerate (relative error is ill-posed at exact zeros)
      Tensor xdat = random_tensor({3, 2}, rng);
      Tensor mu = xdat.clone();
      for (int i = 0; i < mu.numel(); ++i) {
        const float off = 0.5f + rng.uniform();
        mu.data()[i] += (rng.uniform() < 0.5f ? off : -off);
      }
      mu.set_trainable();
      Tensor rr = random_tensor({3}, rng, 0.2f, 1.0f);
      run("gauss_lp", [&] { return weighted(gaussian_unit_logprob_rows(xdat, mu), rr); }, mu);

      Tensor xb = random_tensor({3, 2}, rng, 0.55f, 0.95f);
      Tensor logits = random_tensor({3, 2}, rng, -3.0f, -0.5f).set_trainable();
      run("bern_lp", [&] { return weighted(bernoulli_logprob_rows(xb, logits), rr); },
          logits);
    }
  }
  INFO("worst op ", worst_op, " allclose ratio ", worst);
  CHECK(worst <= 1.0);
}

TEST_CASE("gradient accumulates across tensor reuse") {
  Tensor x = Tensor::scalar(1.5f).set_trainable();
  {
    GradTape tape;
    TapeScope scope(tape);
    // x appears twice: d/dx (x + x^2) = 1 + 2x = 4
    tape.backward(add(x, square(x)));
  }
  CHECK(x.grad()[0] == doctest::Approx(4.0));

  // grads also accumulate across separate backward passes until zeroed
  {
    GradTape tape;
    TapeScope scope(tape);
    tape.backward(mul_scalar(x, 2.0f));
  }
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0f);
}

TEST_CASE("backward of summed losses equals sum of separate backwards") {
  Rng rng(99);
  Tensor x = random_tensor({4}, rng).set_trainable();
  Tensor r = random_tensor({4}, rng);

  Tensor x1 = x.clone().set_trainable();
  {
    GradTape tape;
    TapeScope scope(tape);
    tape.backward(mean(square(x1)));
  }
  std::vector<float> g1 = x1.grad();
  x1.zero_grad();
  {
    GradTape tape;
    TapeScope scope(tape);
    tape.backward(sum(mul(x1, r)));
  }
  std::vector<float> g2 = x1.grad();

  {
    GradTape tape;
    TapeScope scope(tape);
    tape.backward(add(mean(square(x)), sum(mul(x, r))));
  }
  for (int i = 0; i < 4; ++i) {
    CHECK(x.grad()[i] == g1[i] + g2[i]);  // exact: float addition commutes
  }
}

TEST_CASE("same seed gives bit-identical computation") {
  auto build = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor a = random_tensor({8, 8}, rng);
    Tensor b = random_tensor({8, 8}, rng);
    Tensor c = sigmoid(matmul(a, b));
    return mean(dlvae::exp(mul_scalar(c, 0.5f)));
  };
  Tensor r1 = build(2024);
  Tensor r2 = build(2024);
  CHECK(std::memcmp(r1.data(), r2.data(), sizeof(float)) == 0);

  Rng ra(5), rb(5);
  Tensor ta = random_tensor({100}, ra);
  Tensor tb = random_tensor({100}, rb);
  CHECK(std::memcmp(ta.data(), tb.data(), 100 * sizeof(float)) == 0);
}

TEST_CASE("detached tensor blocks gradient flow") {
  Tensor x = Tensor::scalar(2.0f).set_trainable();
  {
    GradTape tape;
    TapeScope scope(tape);
    Tensor y = square(x);             // on tape
    Tensor z = square(y.detached());  // cut here
    Tensor loss = add(y, z);
    tape.backward(loss);
  }
  // only d(x^2)/dx = 4 flows; the detached branch contributes nothing
  CHECK(x.grad()[0] == doctest::Approx(4.0));
}
