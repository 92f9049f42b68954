#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace swaptest {

// SplitMix64 finalizer. Stable across platforms; used to derive independent
// child seeds from a master seed.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// derive_seed(parent, {a, b, ...}) folds each key into the parent in order.
inline std::uint64_t derive_seed(std::uint64_t parent,
                                 std::initializer_list<std::uint64_t> keys) {
  std::uint64_t s = mix64(parent);
  for (auto k : keys) s = mix64(s ^ mix64(k));
  return s;
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) {
  return derive_seed(parent, {fnv1a(tag)});
}

}  // namespace swaptest
