#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace g4ap {

// Deterministic, fully specified PRNG (splitmix64 core) so runs are
// bit-reproducible across standard library implementations. All randomness
// in the engine flows from one top-level seed, fanned out via fork().
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();

  // Standard normal via Box-Muller; one spare value is cached.
  double normal();

  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Child stream derived from this rng's original seed and a label.
  // Forking is independent of how many values were drawn so far.
  Rng fork(std::string_view stream) const;
  Rng fork(std::string_view stream, std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a over arbitrary bytes; used for seed fan-out and config fingerprints.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ull);
std::uint64_t fnv1a_u64(std::uint64_t value, std::uint64_t basis);

}  // namespace g4ap
