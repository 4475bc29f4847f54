// Deterministic seed streams. Every random quantity in a run is drawn from a
// generator whose seed is derived from (run seed, stream label), so training
// and test samples never share a stream and parallel evaluation order cannot
// change results.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "qrc/qcore.hpp"

namespace qrc {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return splitmix64(seed ^ splitmix64(fnv1a(label)));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  return splitmix64(derive_seed(seed, label) + splitmix64(index));
}

inline Rng make_stream(std::uint64_t seed, std::string_view label) { return Rng(derive_seed(seed, label)); }

inline std::vector<QuantumState> haar_sample(int n_qubits, std::size_t count, std::uint64_t seed, std::string_view label) {
  Rng rng = make_stream(seed, label);
  std::vector<QuantumState> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(haar_random_state(n_qubits, rng));
  return out;
}

inline std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

}  // namespace qrc
