#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace bucketreuse {

using Rng = std::mt19937_64;

/// Derives a generator from a path of integers (master seed, starting point,
/// replication, ...). Each 64-bit component is split into two 32-bit words
/// and fed through std::seed_seq, whose mixing is fully specified by the
/// standard, so the child stream depends only on the path.
inline Rng derive_rng(std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(path.size() * 2);
  for (auto v : path) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

template <typename T>
const T& uniform_pick(Rng& rng, const std::vector<T>& values) {
  return values[uniform_index(rng, values.size())];
}

}  // namespace bucketreuse
