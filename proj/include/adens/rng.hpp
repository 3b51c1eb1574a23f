#ifndef ADENS_RNG_HPP
#define ADENS_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace adens {

// Every random choice in the toolkit draws from one master seed through a
// named sub-stream ("data", "init", "fisher", ...), so runs are reproducible
// and reordering one stage does not perturb the others.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t substream_seed(std::uint64_t master, std::string_view name) {
  return splitmix64(master ^ fnv1a64(name));
}

inline std::mt19937_64 substream(std::uint64_t master, std::string_view name) {
  return std::mt19937_64(substream_seed(master, name));
}

}  // namespace adens

#endif  // ADENS_RNG_HPP
