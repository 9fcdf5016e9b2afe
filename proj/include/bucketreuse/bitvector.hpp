#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bucketreuse/errors.hpp"

namespace bucketreuse {

// Fixed-length packed 0/1 vector. Bits past size() in the last word are
// always zero so word-level popcounts stay exact.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::size_t n, bool value = false)
      : size_(n), words_((n + 63) / 64, value ? ~std::uint64_t{0} : 0) {
    trim();
  }

  static BitVector from_bits(std::span<const std::uint8_t> bits) {
    BitVector v(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) v.set(i);
    return v;
  }

  // Parses a string of '0'/'1' characters.
  static BitVector from_string(std::string_view s) {
    BitVector v(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '1')
        v.set(i);
      else if (s[i] != '0')
        throw InvalidParams("bit string may only contain '0' and '1'");
    }
    return v;
  }

  std::size_t size() const { return size_; }

  bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::size_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  void reset(std::size_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
  void assign(std::size_t i, bool v) { v ? set(i) : reset(i); }
  void clear() { std::fill(words_.begin(), words_.end(), 0); }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }

  // Number of positions set in both vectors.
  std::size_t count_and(const BitVector& other) const {
    if (other.size_ != size_) throw LengthMismatch("bit vectors differ in length");
    std::size_t c = 0;
    for (std::size_t i = 0; i < words_.size(); ++i)
      c += static_cast<std::size_t>(std::popcount(words_[i] & other.words_[i]));
    return c;
  }

  bool all() const { return count() == size_; }
  bool none() const { return count() == 0; }

  std::vector<std::uint8_t> to_bits() const {
    std::vector<std::uint8_t> out(size_);
    for (std::size_t i = 0; i < size_; ++i) out[i] = test(i) ? 1 : 0;
    return out;
  }

  std::string to_string() const {
    std::string s(size_, '0');
    for (std::size_t i = 0; i < size_; ++i)
      if (test(i)) s[i] = '1';
    return s;
  }

  friend bool operator==(const BitVector&, const BitVector&) = default;

 private:
  void trim() {
    if (size_ % 64 != 0 && !words_.empty())
      words_.back() &= (std::uint64_t{1} << (size_ % 64)) - 1;
  }

  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

// Run-length encoding "<bit>:<run>,<bit>:<run>,..." e.g. "1:90,0:10".
// The empty vector encodes as "".
inline std::string rle_encode(const BitVector& v) {
  std::string out;
  std::size_t i = 0;
  while (i < v.size()) {
    const bool bit = v.test(i);
    std::size_t j = i;
    while (j < v.size() && v.test(j) == bit) ++j;
    if (!out.empty()) out += ',';
    out += bit ? '1' : '0';
    out += ':';
    out += std::to_string(j - i);
    i = j;
  }
  return out;
}

inline BitVector rle_decode(std::string_view s) {
  std::vector<std::uint8_t> bits;
  while (!s.empty()) {
    const auto comma = s.find(',');
    const std::string_view run = s.substr(0, comma);
    s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
    if (run.size() < 3 || run[1] != ':' || (run[0] != '0' && run[0] != '1'))
      throw InvalidParams("malformed run '" + std::string(run) + "'");
    std::size_t len = 0;
    for (char c : run.substr(2)) {
      if (c < '0' || c > '9') throw InvalidParams("malformed run length");
      len = len * 10 + static_cast<std::size_t>(c - '0');
    }
    if (len == 0) throw InvalidParams("zero-length run");
    bits.insert(bits.end(), len, run[0] == '1' ? 1 : 0);
  }
  return BitVector::from_bits(bits);
}

}  // namespace bucketreuse
