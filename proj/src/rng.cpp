#include "ppolab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "ppolab/error.hpp"

namespace ppolab {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t run_index) {
  std::uint64_t state = master_seed;
  std::uint64_t a = splitmix64(state);
  state = a ^ (run_index * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL);
  return splitmix64(state);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t state = seed;
  for (auto& word : s_) word = splitmix64(state);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

Rng Rng::split(std::uint64_t index) const { return Rng(derive_seed(seed_, index)); }

double sample_normal(Rng& rng, double mu, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidParameter("sample_normal: sigma must be positive, got " + std::to_string(sigma));
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - rng.uniform01();
  const double u2 = rng.uniform01();
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mu + sigma * z;
}

double sample_gamma(Rng& rng, double shape) {
  if (!(shape >= 1.0) || !std::isfinite(shape)) {
    throw InvalidParameter("sample_gamma: shape must be >= 1, got " + std::to_string(shape));
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = sample_normal(rng, 0.0, 1.0);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - rng.uniform01();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_beta(Rng& rng, double alpha, double beta) {
  if (!(alpha >= 1.0) || !(beta >= 1.0)) {
    throw InvalidParameter("sample_beta: alpha and beta must be >= 1, got (" +
                           std::to_string(alpha) + ", " + std::to_string(beta) + ")");
  }
  const double x = sample_gamma(rng, alpha);
  const double y = sample_gamma(rng, beta);
  const double b = x / (x + y);
  return std::clamp(b, kBetaClamp, 1.0 - kBetaClamp);
}

std::size_t sample_categorical(Rng& rng, std::span<const double> probs) {
  if (probs.empty()) throw InvalidParameter("sample_categorical: empty probability vector");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw InvalidParameter("sample_categorical: negative or non-finite probability");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidParameter("sample_categorical: probabilities sum to " + std::to_string(total));
  }
  const double u = rng.uniform01() * total;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  return last_positive;
}

void shuffle_indices(Rng& rng, std::span<std::size_t> indices) {
  for (std::size_t i = indices.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(indices[i - 1], indices[j]);
  }
}

}  // namespace ppolab
