#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace dmsb {

// splitmix64 finalizer, used both as the engine step and to derive sub-stream keys.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_label(std::string_view label) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Small splitmix64 engine satisfying UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// Labelled random stream. `split` derives independent child streams from a key
/// so that draws for one purpose (a sample index, a training step, a task) never
/// depend on how many draws were made elsewhere.
class Rng {
 public:
  explicit Rng(std::uint64_t key = 0) noexcept : key_(key), engine_(mix64(key)) {}

  std::uint64_t key() const noexcept { return key_; }

  Rng split(std::uint64_t label) const noexcept {
    return Rng(mix64(key_ ^ mix64(label + 0x632be59bd9b4e019ULL)));
  }
  Rng split(std::string_view label) const noexcept { return split(hash_label(label)); }

  double normal() { return normal_(engine_); }
  double uniform() { return std::generate_canonical<double, 53>(engine_); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  SplitMix64& engine() noexcept { return engine_; }

 private:
  std::uint64_t key_;
  SplitMix64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace dmsb
