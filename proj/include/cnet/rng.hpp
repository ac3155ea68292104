#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace cnet {

// Mixes a master seed, a stream name, and optional integer salts into an
// independent seed. Every random decision in training comes from a stream
// derived this way, so changing how one stream is consumed never shifts
// another (init, dropout, shuffle).
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::initializer_list<std::uint64_t> salt = {});

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cnet
