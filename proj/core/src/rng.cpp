#include "xvseg/rng.hpp"

#include <cmath>

namespace xvseg {

double Rng::normal() {
  // Box-Muller; two fresh uniforms per draw keeps the stream layout trivial
  // for independent re-implementations.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t Rng::mix(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 over seed xor golden-ratio-spread tag.
  std::uint64_t z = seed ^ (tag + 0x9E3779B97F4A7C15ull);
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace xvseg
