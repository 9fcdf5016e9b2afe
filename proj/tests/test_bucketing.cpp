#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <string>
#include <vector>

#include "bucketreuse/bucketing.hpp"

using namespace bucketreuse;

namespace {

std::vector<UnitId> make_ids(std::size_t n, const std::string& prefix = "user-") {
  std::vector<UnitId> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.emplace_back(prefix + std::to_string(i));
  return ids;
}

}  // namespace

// Reference digests from the python xxhash package (xxh64, seed 0).
TEST(Xxh64, MatchesReferenceDigests) {
  EXPECT_EQ(xxh64(""), 0xef46db3751d8e999ULL);
  EXPECT_EQ(xxh64("a"), 0xd24ec4f1a98c6e5bULL);
  EXPECT_EQ(xxh64("abc"), 0x44bc2cf5ad770999ULL);
  EXPECT_EQ(xxh64(std::string("u\x1fs")), 0xbeaa913a3550b861ULL);
  EXPECT_EQ(xxh64(std::string("user-42\x1fsalt-2021")), 0x74819d1ebb1411daULL);
}

TEST(Xxh64, LongInputsUseStripeLoop) {
  const std::string s(100, 'x');
  EXPECT_EQ(xxh64(s), xxh64(s));
  EXPECT_NE(xxh64(s), xxh64(s.substr(1)));
}

TEST(HashToBucket, ReferenceAssignments) {
  EXPECT_EQ(hash_to_bucket(UnitId("u"), {100, Salt{"s"}}).index, 77u);
  EXPECT_EQ(hash_to_bucket(UnitId("user-42"), {1000, Salt{"salt-2021"}}).index, 594u);
}

TEST(HashToBucket, ConsistentAndInRange) {
  const BucketingConfig cfg{37, Salt{"abc"}};
  for (const auto& id : make_ids(500)) {
    const auto b = hash_to_bucket(id, cfg);
    EXPECT_LT(b.index, 37u);
    EXPECT_EQ(b, hash_to_bucket(id, cfg));
  }
}

TEST(HashToBucket, SingleBucket) { EXPECT_EQ(hash_to_bucket(UnitId("x"), {1, Salt{""}}).index, 0u); }

TEST(HashToBucket, ZeroBucketsRejected) {
  EXPECT_THROW(hash_to_bucket(UnitId("x"), {0, Salt{""}}), InvalidParams);
}

TEST(UnitId, EmptyRejected) { EXPECT_THROW(UnitId(""), InvalidParams); }

TEST(SaltedHash, SeparatorPreventsConcatenationCollisions) {
  EXPECT_NE(salted_hash(UnitId("ab"), Salt{"c"}), salted_hash(UnitId("a"), Salt{"bc"}));
}

TEST(ChiSquare, KnownQuantiles) {
  // 95% quantile of chi-square(1) is 3.841458820694124.
  EXPECT_NEAR(chi_square_p_value(3.841458820694124, 1), 0.05, 1e-12);
  // chi-square(2) tail is exp(-x/2).
  EXPECT_NEAR(chi_square_p_value(4.0, 2), std::exp(-2.0), 1e-14);
  EXPECT_EQ(chi_square_p_value(0.0, 5), 1.0);
  EXPECT_EQ(chi_square_p_value(3.0, 0), 1.0);
}

TEST(Uniformity, HashedIdsLookUniform) {
  const auto ids = make_ids(100000);
  const auto r = uniformity_report(ids, {100, Salt{"exp-salt"}});
  ASSERT_EQ(r.counts.size(), 100u);
  std::uint64_t total = 0;
  for (auto c : r.counts) total += c;
  EXPECT_EQ(total, 100000u);
  EXPECT_GT(r.p_value, 0.001);
}

TEST(Uniformity, TooFewIds) {
  const auto ids = make_ids(99);
  EXPECT_THROW(uniformity_report(ids, {10, Salt{"s"}}), TooFewIds);
  EXPECT_NO_THROW(uniformity_report(make_ids(100), {10, Salt{"s"}}));
}

TEST(Uniformity, DegenerateIdsFail) {
  std::vector<UnitId> ids(1000, UnitId("same"));
  EXPECT_LT(uniformity_report(ids, {10, Salt{"s"}}).p_value, 1e-6);
}

TEST(Independence, DifferentSaltsIndependent) {
  const auto ids = make_ids(50000);
  const auto r = salt_independence_report(ids, 10, Salt{"salt-a"}, Salt{"salt-b"});
  EXPECT_DOUBLE_EQ(r.degrees_of_freedom, 81.0);
  EXPECT_GT(r.p_value, 0.001);
}

TEST(Independence, SameSaltFullyDependent) {
  const auto ids = make_ids(5000);
  const auto r = salt_independence_report(ids, 10, Salt{"same"}, Salt{"same"});
  EXPECT_LT(r.p_value, 1e-12);
}

TEST(Independence, HandComputedTable) {
  // [[10, 20], [30, 40]]: expected [[12, 18], [28, 42]].
  const auto r = independence_test({{10, 20}, {30, 40}});
  const double chi = 4.0 / 12 + 4.0 / 18 + 4.0 / 28 + 4.0 / 42;
  EXPECT_NEAR(r.chi_square_statistic, chi, 1e-12);
  EXPECT_DOUBLE_EQ(r.degrees_of_freedom, 1.0);
}

TEST(PathCount, PowersOfTwo) {
  EXPECT_EQ(path_count_nonexclusive(0), 1u);
  EXPECT_EQ(path_count_nonexclusive(3), 8u);
  EXPECT_EQ(path_count_nonexclusive(62), std::uint64_t{1} << 62);
  EXPECT_THROW(path_count_nonexclusive(63), Overflow);
  EXPECT_THROW(path_count_nonexclusive(-1), InvalidParams);
}

TEST(Uniformity, MillionIdsThousandBuckets) {
  const auto ids = make_ids(1000000, "id");
  const auto r = uniformity_report(ids, {1000, Salt{"salt-u"}});
  EXPECT_GT(r.p_value, 0.001);
}

TEST(Uniformity, SingleBucketIsPerfect) {
  const auto r = uniformity_report(make_ids(20), {1, Salt{"s"}});
  EXPECT_EQ(r.chi_square_statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(Uniformity, IdenticalIdsTwoBuckets) {
  std::vector<UnitId> ids(100, UnitId("dup"));
  const auto r = uniformity_report(ids, {2, Salt{"s"}});
  EXPECT_TRUE(r.counts[0] == 100 || r.counts[1] == 100);
  EXPECT_LT(r.p_value, 1e-20);
}

TEST(Independence, MillionIdsHundredBuckets) {
  const auto ids = make_ids(1000000, "id");
  const auto r = salt_independence_report(ids, 100, Salt{"s1"}, Salt{"s2"});
  EXPECT_DOUBLE_EQ(r.degrees_of_freedom, 99.0 * 99.0);
  EXPECT_GT(r.p_value, 0.001);
}

TEST(Xxh64, AvalancheOnSingleByteFlip) {
  double flipped = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    std::string id = "user-" + std::to_string(i * 7919);
    const auto h1 = xxh64(id);
    id[static_cast<std::size_t>(i) % id.size()] ^= 0x01;
    flipped += std::popcount(h1 ^ xxh64(id));
  }
  EXPECT_GE(flipped / n, 25.0);
}

TEST(PathCount, SpecValues) {
  EXPECT_EQ(path_count_nonexclusive(5), 32u);
  EXPECT_EQ(path_count_nonexclusive(10), 1024u);
}
