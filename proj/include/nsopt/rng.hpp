#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace nsopt {

/// Counter-based 64-bit generator (splitmix64). All randomness in this
/// project flows through it so that runs are reproducible from a single
/// seed on any platform with the same build.
///
/// Stream derivation: stream(seed, k) starts from state
/// seed + (k+1) * 0x9E3779B97F4A7C15, so independent substreams (data
/// generation, restart starting points, ...) never overlap.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1].
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller. Uses two uniforms per draw; no
  /// cached second value, so the stream position is a pure function of
  /// the number of draws.
  double gaussian() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Eigen::VectorXd gaussian_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = gaussian();
    return v;
  }

  /// Uniform point on the unit sphere in R^n.
  Eigen::VectorXd unit_sphere(Eigen::Index n) {
    Eigen::VectorXd v = gaussian_vector(n);
    const double nrm = v.norm();
    if (nrm == 0.0) {
      v.setZero();
      v[0] = 1.0;
      return v;
    }
    return v / nrm;
  }

private:
  std::uint64_t state_;
};

}  // namespace nsopt
