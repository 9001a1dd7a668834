#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>

namespace momfit {

// seeded generator with portable gaussian and sphere sampling.  the gaussian
// uses the polar method on top of the raw uniform stream instead of
// std::normal_distribution, whose output sequence differs between standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
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
    have_spare_ = true;
    return u * f;
  }

  Eigen::VectorXd gaussian_vector(Eigen::Index n) {
    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i) g[i] = gaussian();
    return g;
  }

  // uniform direction on the unit sphere
  Eigen::VectorXd unit_vector(Eigen::Index n) {
    Eigen::VectorXd g;
    do {
      g = gaussian_vector(n);
    } while (g.norm() == 0.0);
    return g / g.norm();
  }

  // independent stream for a substream index, stable across thread counts
  Rng derive(std::uint64_t index) const { return Rng(mix(seed_ ^ mix(index))); }

  std::uint64_t seed() const { return seed_; }

 private:
  // splitmix64 finalizer, a cheap well-mixed hash
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace momfit
