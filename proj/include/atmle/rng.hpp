#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace atmle {

namespace detail {
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace detail

// xoshiro256++ with splitmix64 seeding. All draws are implemented here so
// results are identical across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : state_) word = detail::splitmix64(sm);
  }

  uint64_t next() {
    const uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  int bernoulli(double p) { return uniform() < p ? 1 : 0; }

  // Standard normal via the polar method; the spare draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Uniform integer in [0, n) by rejection; n must be positive.
  uint64_t bounded(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      const uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = size_t(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::array<uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stable derivation of sub-stream seeds (replicates, CV folds, ...).
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  detail::splitmix64(s);
  return detail::splitmix64(s);
}

// n distinct indices from [0, pool), returned in ascending order.
inline std::vector<int> sample_without_replacement(int pool, int n, Rng& rng) {
  std::vector<int> idx(pool);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < n; ++i) {
    const int j = i + int(rng.bounded(uint64_t(pool - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace atmle
