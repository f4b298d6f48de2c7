#ifndef ARGOSSM_RNG_HPP
#define ARGOSSM_RNG_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace argossm {

// splitmix64 finalizer; used to derive well-separated substream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ (b + 0x9e3779b97f4a7c15ULL));
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(a, b), c);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                           std::uint64_t d) {
  return mix64(mix64(a, b, c), d);
}

// Seeded random stream. Substreams are derived by key from the stream's seed,
// not from its current state, so results do not depend on evaluation order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  Rng substream(std::uint64_t key) const { return Rng(mix64(seed_, key)); }
  Rng substream(std::uint64_t k1, std::uint64_t k2) const {
    return Rng(mix64(seed_, k1, k2));
  }
  Rng substream(std::uint64_t k1, std::uint64_t k2, std::uint64_t k3) const {
    return Rng(mix64(seed_, k1, k2, k3));
  }

  double uniform() { return unif_(engine_); }
  double normal() { return norm_(engine_); }

  Eigen::Vector2d normal2() { return {normal(), normal()}; }
  Eigen::Vector4d normal4() { return {normal(), normal(), normal(), normal()}; }

  Eigen::VectorXd normal_vec(int n) {
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z(i) = normal();
    return z;
  }

  double gamma(double shape, double scale) {
    std::gamma_distribution<double> d(shape, scale);
    return d(engine_);
  }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace argossm

#endif
