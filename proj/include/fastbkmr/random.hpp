#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Core>

namespace fastbkmr {

// All randomness flows through an explicitly passed engine; nothing in the
// library keeps hidden global state.
using Rng = std::mt19937_64;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Child seed for an independent stream (replicate, config, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t s = detail::splitmix64(base);
  for (auto k : keys) s = detail::splitmix64(s ^ detail::splitmix64(k + 0x632be59bd9b4e019ULL));
  return s;
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline Eigen::VectorXd standard_normal_vector(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

// Inverse-gamma in the shape/rate parameterization: x ~ IG(shape, rate)
// iff 1/x ~ Gamma(shape, scale = 1/rate).
struct InverseGamma {
  double shape;
  double rate;

  double draw(Rng& rng) const {
    std::gamma_distribution<double> g(shape, 1.0 / rate);
    return 1.0 / g(rng);
  }
};

}  // namespace fastbkmr
