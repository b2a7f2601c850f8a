#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dlvae {

// Named sub-streams derived from one master seed. Keeping the derivation in
// one place guarantees that e.g. metric sampling never perturbs training.
enum class Stream : std::uint64_t {
  Data = 1,
  Init = 2,
  Train = 3,
  Metric = 4,
  Val = 5,
  Split = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, Stream s) {
  return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(s)));
}

inline std::uint64_t substream_seed(std::uint64_t stream, std::uint64_t idx) {
  return splitmix64(stream ^ splitmix64(idx + 0x51ed2701ULL));
}

// mt19937_64 plus hand-rolled transforms. std::normal_distribution and
// std::uniform_real_distribution have implementation-defined output, so we
// avoid them to keep artifacts byte-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1), 24 bits of mantissa
  float uniform() {
    return static_cast<float>(gen_() >> 40) * 0x1.0p-24f;
  }

  // (0, 1]
  float uniform_pos() {
    return (static_cast<float>(gen_() >> 40) + 1.0f) * 0x1.0p-24f;
  }

  double uniform_double() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // unbiased [0, n)
  int uniform_int(int n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return static_cast<int>(v % static_cast<std::uint64_t>(n));
  }

  // Box-Muller with a cached spare
  float normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const float u1 = uniform_pos();
    const float u2 = uniform();
    const float r = std::sqrt(-2.0f * std::log(u1));
    const float a = 6.28318530717958647692f * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  void fill_normal(float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = normal();
  }

  void fill_uniform(float* out, std::size_t n, float lo, float hi) {
    for (std::size_t i = 0; i < n; ++i) out[i] = lo + (hi - lo) * uniform();
  }

  // Fisher-Yates; std::shuffle is implementation-defined
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  float spare_ = 0.0f;
};

}  // namespace dlvae
