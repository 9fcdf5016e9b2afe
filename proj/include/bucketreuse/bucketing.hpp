#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "bucketreuse/errors.hpp"

namespace bucketreuse {

/// Opaque unit identifier (user id, device id, ...). Never empty.
class UnitId {
 public:
  explicit UnitId(std::string value) : value_(std::move(value)) {
    if (value_.empty()) throw InvalidParams("unit id must not be empty");
  }
  const std::string& value() const { return value_; }
  friend bool operator==(const UnitId&, const UnitId&) = default;

 private:
  std::string value_;
};

struct Salt {
  std::string value;
};

struct BucketId {
  std::uint64_t index = 0;
  friend auto operator<=>(const BucketId&, const BucketId&) = default;
};

struct BucketingConfig {
  std::uint64_t num_buckets = 1;
  Salt salt;
};

namespace detail {

inline constexpr std::uint64_t kPrime1 = 0x9E3779B185EBCA87ULL;
inline constexpr std::uint64_t kPrime2 = 0xC2B2AE3D27D4EB4FULL;
inline constexpr std::uint64_t kPrime3 = 0x165667B19E3779F9ULL;
inline constexpr std::uint64_t kPrime4 = 0x85EBCA77C2B2AE63ULL;
inline constexpr std::uint64_t kPrime5 = 0x27D4EB2F165667C5ULL;

constexpr std::uint64_t rotl(std::uint64_t x, int r) { return (x << r) | (x >> (64 - r)); }

inline std::uint64_t read64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::uint32_t read32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

constexpr std::uint64_t xxh_round(std::uint64_t acc, std::uint64_t input) {
  acc += input * kPrime2;
  acc = rotl(acc, 31);
  return acc * kPrime1;
}

constexpr std::uint64_t xxh_merge(std::uint64_t acc, std::uint64_t val) {
  acc ^= xxh_round(0, val);
  return acc * kPrime1 + kPrime4;
}

}  // namespace detail

/// XXH64 over a byte string. Endianness-independent (bytes are read as
/// little-endian words regardless of host order).
inline std::uint64_t xxh64(std::string_view bytes, std::uint64_t seed = 0) {
  using namespace detail;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t len = bytes.size();
  const unsigned char* const end = p + len;
  std::uint64_t h;

  if (len >= 32) {
    std::uint64_t v1 = seed + kPrime1 + kPrime2;
    std::uint64_t v2 = seed + kPrime2;
    std::uint64_t v3 = seed;
    std::uint64_t v4 = seed - kPrime1;
    const unsigned char* const limit = end - 32;
    do {
      v1 = xxh_round(v1, read64(p));
      v2 = xxh_round(v2, read64(p + 8));
      v3 = xxh_round(v3, read64(p + 16));
      v4 = xxh_round(v4, read64(p + 24));
      p += 32;
    } while (p <= limit);
    h = rotl(v1, 1) + rotl(v2, 7) + rotl(v3, 12) + rotl(v4, 18);
    h = xxh_merge(h, v1);
    h = xxh_merge(h, v2);
    h = xxh_merge(h, v3);
    h = xxh_merge(h, v4);
  } else {
    h = seed + kPrime5;
  }

  h += static_cast<std::uint64_t>(len);

  while (p + 8 <= end) {
    h ^= xxh_round(0, read64(p));
    h = rotl(h, 27) * kPrime1 + kPrime4;
    p += 8;
  }
  if (p + 4 <= end) {
    h ^= static_cast<std::uint64_t>(read32(p)) * kPrime1;
    h = rotl(h, 23) * kPrime2 + kPrime3;
    p += 4;
  }
  while (p < end) {
    h ^= static_cast<std::uint64_t>(*p) * kPrime5;
    h = rotl(h, 11) * kPrime1;
    ++p;
  }

  h ^= h >> 33;
  h *= kPrime2;
  h ^= h >> 29;
  h *= kPrime3;
  h ^= h >> 32;
  return h;
}

/// Identifier of the hash construction, recorded in run metadata.
inline constexpr std::string_view kHashFunctionId = "xxh64-seed0(id|0x1f|salt)";

inline constexpr char kSaltSeparator = '\x1f';

// id bytes, then 0x1F, then salt bytes.
inline std::uint64_t salted_hash(const UnitId& id, const Salt& salt) {
  std::string buf;
  buf.reserve(id.value().size() + 1 + salt.value.size());
  buf += id.value();
  buf += kSaltSeparator;
  buf += salt.value;
  return xxh64(buf);
}

inline BucketId hash_to_bucket(const UnitId& id, const BucketingConfig& cfg) {
  if (cfg.num_buckets == 0) throw InvalidParams("number of buckets must be >= 1");
  return BucketId{salted_hash(id, cfg.salt) % cfg.num_buckets};
}

/// Upper tail of the chi-square distribution. Zero degrees of freedom is
/// treated as a point mass at 0, giving p = 1.
inline double chi_square_p_value(double statistic, double dof) {
  if (dof <= 0) return 1.0;
  if (statistic <= 0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, statistic / 2.0);
}

struct UniformityReport {
  std::vector<std::uint64_t> counts;
  double chi_square_statistic = 0;
  double p_value = 1;
};

/// Goodness-of-fit of the bucket counts against the uniform expectation
/// |ids|/B, on B-1 degrees of freedom. Requires at least 10 ids per bucket.
inline UniformityReport uniformity_report(std::span<const UnitId> ids, const BucketingConfig& cfg) {
  if (cfg.num_buckets == 0) throw InvalidParams("number of buckets must be >= 1");
  if (ids.size() < 10 * cfg.num_buckets)
    throw TooFewIds("need at least " + std::to_string(10 * cfg.num_buckets) + " ids, got " +
                    std::to_string(ids.size()));
  UniformityReport r;
  r.counts.assign(cfg.num_buckets, 0);
  for (const auto& id : ids) ++r.counts[hash_to_bucket(id, cfg).index];
  const double expected = static_cast<double>(ids.size()) / static_cast<double>(cfg.num_buckets);
  double chi = 0;
  for (auto c : r.counts) {
    const double d = static_cast<double>(c) - expected;
    chi += d * d / expected;
  }
  r.chi_square_statistic = chi;
  r.p_value = chi_square_p_value(chi, static_cast<double>(cfg.num_buckets - 1));
  return r;
}

struct IndependenceReport {
  std::vector<std::vector<std::uint64_t>> table;  // [bucket under salt 1][bucket under salt 2]
  double chi_square_statistic = 0;
  double degrees_of_freedom = 0;
  double p_value = 1;
};

/// Pearson chi-square test of independence on an R x C contingency table.
/// Rows and columns with zero marginal are dropped from the dof count.
inline IndependenceReport independence_test(std::vector<std::vector<std::uint64_t>> table) {
  IndependenceReport r;
  const std::size_t rows = table.size();
  const std::size_t cols = rows ? table[0].size() : 0;
  std::vector<double> row_sum(rows, 0), col_sum(cols, 0);
  double total = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (table[i].size() != cols) throw InvalidParams("ragged contingency table");
    for (std::size_t j = 0; j < cols; ++j) {
      row_sum[i] += static_cast<double>(table[i][j]);
      col_sum[j] += static_cast<double>(table[i][j]);
      total += static_cast<double>(table[i][j]);
    }
  }
  std::size_t live_rows = 0, live_cols = 0;
  for (double s : row_sum) live_rows += s > 0;
  for (double s : col_sum) live_cols += s > 0;
  double chi = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (row_sum[i] == 0) continue;
    for (std::size_t j = 0; j < cols; ++j) {
      if (col_sum[j] == 0) continue;
      const double e = row_sum[i] * col_sum[j] / total;
      const double d = static_cast<double>(table[i][j]) - e;
      chi += d * d / e;
    }
  }
  r.table = std::move(table);
  r.chi_square_statistic = chi;
  r.degrees_of_freedom =
      live_rows && live_cols ? static_cast<double>((live_rows - 1) * (live_cols - 1)) : 0.0;
  r.p_value = chi_square_p_value(chi, r.degrees_of_freedom);
  return r;
}

/// Joint bucket distribution of the same ids under two salts.
inline IndependenceReport salt_independence_report(std::span<const UnitId> ids, std::uint64_t num_buckets,
                                                   const Salt& first, const Salt& second) {
  std::vector<std::vector<std::uint64_t>> table(num_buckets, std::vector<std::uint64_t>(num_buckets, 0));
  const BucketingConfig a{num_buckets, first};
  const BucketingConfig b{num_buckets, second};
  for (const auto& id : ids) ++table[hash_to_bucket(id, a).index][hash_to_bucket(id, b).index];
  return independence_test(std::move(table));
}

/// Number of distinct experiment paths when experiments run non-exclusively:
/// each unit either is or is not in each experiment.
inline std::uint64_t path_count_nonexclusive(int num_experiments) {
  if (num_experiments < 0) throw InvalidParams("number of experiments must be >= 0");
  if (num_experiments > 62) throw Overflow("2^" + std::to_string(num_experiments) + " exceeds 2^62");
  return std::uint64_t{1} << num_experiments;
}

}  // namespace bucketreuse
