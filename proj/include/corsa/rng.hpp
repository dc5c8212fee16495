#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace corsa {

// Seeded RNG with hand-rolled distributions. std::mt19937_64's output
// stream is pinned by the standard; the distribution adapters in
// <random> are not, so we implement uniform/normal/discrete draws here
// to keep generated data identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream; deterministic in (seed, stream).
  Rng fork(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1))));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// Discrete distribution over integer values with given weights.
class DiscreteSampler {
 public:
  DiscreteSampler(std::vector<int> values, std::vector<double> weights)
      : values_(std::move(values)) {
    cum_.reserve(weights.size());
    double acc = 0.0;
    for (double w : weights) {
      acc += w;
      cum_.push_back(acc);
    }
    total_ = acc;
  }

  const std::vector<int>& values() const { return values_; }

  int sample(Rng& rng) const {
    const double u = rng.uniform() * total_;
    std::size_t lo = 0, hi = cum_.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cum_[mid] <= u)
        lo = mid + 1;
      else
        hi = mid;
    }
    return values_[lo];
  }

 private:
  std::vector<int> values_;
  std::vector<double> cum_;
  double total_ = 0.0;
};

}  // namespace corsa
