#pragma once

#include <cmath>
#include <cstdint>

namespace mambadm {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic generator. std:: distributions are implementation-defined,
// so every draw here is hand-rolled to keep outputs byte-identical across
// standard libraries and runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; consumes exactly two uniforms per draw.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 1) return 0;
    int v = static_cast<int>(uniform() * static_cast<double>(n));
    return v >= n ? n - 1 : v;
  }

  std::int64_t uniform_int64(std::int64_t n) {
    if (n <= 1) return 0;
    auto v = static_cast<std::int64_t>(uniform() * static_cast<double>(n));
    return v >= n ? n - 1 : v;
  }

  // Derive an independent child stream without advancing this generator,
  // so forked consumers do not depend on each other's draw counts.
  Rng fork(std::uint64_t stream) const {
    std::uint64_t s = state_ ^ (0x9e3779b97f4a7c15ull * (stream + 0x51ed270b));
    splitmix64_next(s);
    return Rng(s);
  }

 private:
  std::uint64_t state_;
};

}  // namespace mambadm
