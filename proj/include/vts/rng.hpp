#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "vts/tensor.hpp"

namespace vts {

// 64-bit FNV-1a; used to derive independent substream seeds from a global
// seed plus a stream name or index, so each component can be reproduced in
// isolation.
std::uint64_t fnv1a(const std::string& s);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t stream_seed(std::uint64_t seed, const std::string& name);

// Deterministic RNG wrapper. Gaussian draws use an explicit Box-Muller pair
// (no cached spare value) so the mapping from engine draws to outputs is
// fixed and bit-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  double normal();                         // standard normal
  int uniform_int(int lo, int hi);         // inclusive bounds
  std::uint64_t next_u64() { return eng_(); }

  Tensor normal_tensor(const std::vector<int>& shape);
  Tensor uniform_tensor(const std::vector<int>& shape, double lo, double hi);

 private:
  std::mt19937_64 eng_;
};

}  // namespace vts
