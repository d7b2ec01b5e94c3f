#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace ppolab {

/// SplitMix64 finalizer. Used for seed expansion and seed derivation.
std::uint64_t splitmix64(std::uint64_t& state);

/// Deterministic stream derived from (master seed, run index).
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t run_index);

// xoshiro256** seeded through SplitMix64. Identical seeds give identical
// sequences on every platform; the state is owned by one run at a time.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64();

  /// Uniform variate in [0, 1) with 53 bits of precision.
  double uniform01();

  /// Independent child stream for run `index`.
  Rng split(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
};

/// Box-Muller draw from N(mu, sigma^2); sigma must be positive.
double sample_normal(Rng& rng, double mu, double sigma);

/// Marsaglia-Tsang Gamma(shape, 1) draw; shape must be >= 1.
double sample_gamma(Rng& rng, double shape);

/// Lower and upper clamp applied to Beta draws.
inline constexpr double kBetaClamp = 1e-8;

/// Beta(alpha, beta) draw in [kBetaClamp, 1 - kBetaClamp]; alpha, beta >= 1.
double sample_beta(Rng& rng, double alpha, double beta);

/// Inverse-CDF categorical draw. `probs` must be a probability vector.
std::size_t sample_categorical(Rng& rng, std::span<const double> probs);

/// Fisher-Yates permutation of [0, n).
void shuffle_indices(Rng& rng, std::span<std::size_t> indices);

}  // namespace ppolab
