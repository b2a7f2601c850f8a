#include "doctest.h"

#include <cmath>
#include <cstring>

#include "dlvae/optim.hpp"
#include "dlvae/rng.hpp"

using namespace dlvae;

TEST_CASE("zero gradient leaves params unchanged") {
  Tensor p = Tensor::from_data({3}, {1.0f, -2.0f, 0.5f}).set_trainable();
  std::vector<float> before = p.vec();
  AdamW opt({{"p", &p}}, {.lr = 0.1f, .weight_decay = 0.0f});
  p.zero_grad();
  opt.step();
  for (int i = 0; i < 3; ++i) CHECK(p.at(i) == before[i]);
}

TEST_CASE("single step on scalar matches hand-executed recurrence") {
  // p=1, g=1, lr=0.1, step 1: m_hat=1, v_hat=1, update = lr/(1+eps) ~ 0.1
  Tensor p = Tensor::scalar(1.0f).set_trainable();
  p.grad()[0] = 1.0f;
  AdamW opt({{"p", &p}}, {.lr = 0.1f});
  opt.step();
  CHECK(p.item() == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("same seed gives bit-identical trajectories") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor p = Tensor::zeros({16}).set_trainable();
    rng.fill_uniform(p.data(), 16, -1.0f, 1.0f);
    AdamW opt({{"p", &p}}, {.lr = 0.01f, .weight_decay = 0.01f});
    for (int step = 0; step < 25; ++step) {
      p.zero_grad();
      for (int i = 0; i < 16; ++i) p.grad()[i] = rng.normal();
      opt.step();
    }
    return p;
  };
  Tensor a = run(7);
  Tensor b = run(7);
  CHECK(std::memcmp(a.data(), b.data(), 16 * sizeof(float)) == 0);
}

TEST_CASE("weight_decay zero equals vanilla adam") {
  Rng rng(3);
  Tensor p = Tensor::zeros({8}).set_trainable();
  rng.fill_uniform(p.data(), 8, -1.0f, 1.0f);
  std::vector<float> shadow = p.vec();

  AdamW opt({{"p", &p}}, {.lr = 0.05f, .weight_decay = 0.0f});
  std::vector<float> m(8, 0.0f), v(8, 0.0f);
  for (int t = 1; t <= 40; ++t) {
    p.zero_grad();
    std::vector<float> g(8);
    for (int i = 0; i < 8; ++i) {
      g[i] = rng.normal();
      p.grad()[i] = g[i];
    }
    opt.step();
    // hand-rolled vanilla Adam on the shadow copy
    const float bc1 = 1.0f - std::pow(0.9f, static_cast<float>(t));
    const float bc2 = 1.0f - std::pow(0.999f, static_cast<float>(t));
    for (int i = 0; i < 8; ++i) {
      m[i] = 0.9f * m[i] + 0.1f * g[i];
      v[i] = 0.999f * v[i] + 0.001f * g[i] * g[i];
      shadow[i] -= 0.05f * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + 1e-8f);
    }
  }
  for (int i = 0; i < 8; ++i) {
    CHECK(p.at(i) == doctest::Approx(shadow[i]).epsilon(1e-5));
  }
}

TEST_CASE("constant gradient moves opposite to its sign every step") {
  Tensor p = Tensor::from_data({2}, {0.0f, 0.0f}).set_trainable();
  AdamW opt({{"p", &p}}, {.lr = 0.01f});
  float prev0 = 0.0f, prev1 = 0.0f;
  for (int t = 0; t < 50; ++t) {
    p.zero_grad();
    p.grad()[0] = 0.7f;   // positive gradient: param must decrease
    p.grad()[1] = -1.3f;  // negative gradient: param must increase
    opt.step();
    CHECK(p.at(0) < prev0);
    CHECK(p.at(1) > prev1);
    prev0 = p.at(0);
    prev1 = p.at(1);
  }
}

TEST_CASE("missing gradient buffer is a contract error naming the parameter") {
  Tensor p = Tensor::scalar(1.0f);  // not trainable
  CHECK_THROWS_WITH_AS(AdamW({{"enc_w.bias", &p}}, {}),
                       doctest::Contains("enc_w.bias"), ContractError);
}

TEST_CASE("clip_grad_norm") {
  Tensor p = Tensor::from_data({2}, {0.0f, 0.0f}).set_trainable();

  p.grad()[0] = 0.3f;
  p.grad()[1] = 0.4f;  // norm 0.5
  CHECK(clip_grad_norm({{"p", &p}}, 1.0f) == 1.0f);
  CHECK(p.grad()[0] == 0.3f);
  CHECK(p.grad()[1] == 0.4f);

  p.grad()[0] = 3.0f;
  p.grad()[1] = 4.0f;  // norm 5
  const float scale = clip_grad_norm({{"p", &p}}, 1.0f);
  CHECK(scale == doctest::Approx(0.2));
  CHECK(p.grad()[0] == doctest::Approx(0.6));
  CHECK(p.grad()[1] == doctest::Approx(0.8));

  p.grad()[0] = std::nanf("");
  p.grad()[1] = 1.0f;
  CHECK(std::isnan(clip_grad_norm({{"p", &p}}, 1.0f)));
  CHECK(p.grad()[1] == 1.0f);  // untouched so the caller can inspect/skip

  CHECK_THROWS_AS(clip_grad_norm({{"p", &p}}, 0.0f), ContractError);
}
