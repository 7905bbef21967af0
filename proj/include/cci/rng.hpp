#pragma once
// Seeding and draws that give identical streams on every platform.
//
// Engine: std::mt19937_64 (fully specified by the standard). Standard
// distributions are implementation-defined, so uniforms are built from the
// top 53 bits directly. Per-stream seeds come from SplitMix64 finalization:
//
//   derive_seed(base, id) = mix64(base ^ mix64(id + 0x9e3779b97f4a7c15))

#include <cstdint>
#include <random>

namespace cci {

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream_id) {
  return mix64(base ^ mix64(stream_id + 0x9e3779b97f4a7c15ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n), n > 0. Modulo bias is below 2^-50 for n < 2^14.
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cci
