#include "vts/rng.hpp"

#include <cmath>

namespace vts {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, const std::string& name) {
  return mix_seed(seed, fnv1a(name));
}

double Rng::uniform() {
  // 53-bit mantissa resolution in [0, 1)
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // Box-Muller without caching: consumes two uniforms, returns one value.
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int Rng::uniform_int(int lo, int hi) {
  std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(eng_() % span);
}

Tensor Rng::normal_tensor(const std::vector<int>& shape) {
  Tensor t(shape);
  for (auto& x : t.data) x = normal();
  return t;
}

Tensor Rng::uniform_tensor(const std::vector<int>& shape, double lo, double hi) {
  Tensor t(shape);
  for (auto& x : t.data) x = uniform(lo, hi);
  return t;
}

}  // namespace vts
