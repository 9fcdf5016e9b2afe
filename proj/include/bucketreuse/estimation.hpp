#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bucketreuse/bitvector.hpp"
#include "bucketreuse/bucketing.hpp"
#include "bucketreuse/coordination.hpp"
#include "bucketreuse/errors.hpp"
#include "bucketreuse/probability.hpp"

namespace bucketreuse {

/// Finite population of N units split into B equally sized buckets, with
/// potential outcomes Y_i^t(0) and Y_i^t(1) for every modelled time index t.
template <typename T>
class BasicPopulation {
 public:
  using value_type = T;
  using Series = std::vector<std::vector<T>>;  // [t][i]

  BasicPopulation(std::uint64_t num_buckets, std::vector<BucketId> bucket_of_unit, Series y0, Series y1)
      : num_buckets_(num_buckets), bucket_of_(std::move(bucket_of_unit)), y0_(std::move(y0)), y1_(std::move(y1)) {
    if (num_buckets_ == 0) throw InvalidParams("population needs at least one bucket");
    if (bucket_of_.size() % num_buckets_ != 0) throw InvalidParams("units do not split into equal buckets");
    bucket_size_ = bucket_of_.size() / num_buckets_;
    if (bucket_size_ == 0) throw InvalidParams("buckets must be non-empty");
    members_.assign(num_buckets_, {});
    for (std::size_t i = 0; i < bucket_of_.size(); ++i) {
      const auto b = bucket_of_[i].index;
      if (b >= num_buckets_) throw InvalidParams("unit bucket out of range");
      members_[b].push_back(i);
    }
    for (const auto& m : members_)
      if (m.size() != bucket_size_) throw InvalidParams("buckets must have equal sizes");
    if (y0_.size() != y1_.size() || y0_.empty()) throw InvalidParams("need both potential outcomes at >= 1 time");
    for (std::size_t t = 0; t < y0_.size(); ++t)
      if (y0_[t].size() != bucket_of_.size() || y1_[t].size() != bucket_of_.size())
        throw InvalidParams("outcome series must cover every unit");
  }

  /// Units laid out bucket-major: unit i lives in bucket i / bucket_size.
  static BasicPopulation contiguous(std::uint64_t num_buckets, std::uint64_t bucket_size, Series y0, Series y1) {
    std::vector<BucketId> buckets(num_buckets * bucket_size);
    for (std::size_t i = 0; i < buckets.size(); ++i) buckets[i] = BucketId{i / bucket_size};
    return BasicPopulation(num_buckets, std::move(buckets), std::move(y0), std::move(y1));
  }

  std::size_t size() const { return bucket_of_.size(); }
  std::uint64_t num_buckets() const { return num_buckets_; }
  std::uint64_t bucket_size() const { return bucket_size_; }
  std::size_t num_times() const { return y0_.size(); }
  BucketId bucket_of(std::size_t unit) const { return bucket_of_[unit]; }
  const std::vector<std::size_t>& members(BucketId b) const { return members_.at(b.index); }

  const std::vector<T>& y0(std::size_t t) const { check_time(t); return y0_[t]; }
  const std::vector<T>& y1(std::size_t t) const { check_time(t); return y1_[t]; }

  void check_time(std::size_t t) const {
    if (t >= y0_.size()) throw UnknownTime("time index " + std::to_string(t) + " not modelled");
  }

 private:
  std::uint64_t num_buckets_;
  std::uint64_t bucket_size_ = 0;
  std::vector<BucketId> bucket_of_;
  std::vector<std::vector<std::size_t>> members_;
  Series y0_;
  Series y1_;
};

using Population = BasicPopulation<double>;
using IntegerPopulation = BasicPopulation<std::int64_t>;

/// W_i = 1 for treatment, 0 for control, over the units of one sample.
struct TreatmentAssignment {
  std::vector<std::uint8_t> w;

  std::size_t treated() const { return static_cast<std::size_t>(std::count(w.begin(), w.end(), 1)); }
  void require_equal_split() const {
    if (w.size() % 2 != 0 || treated() * 2 != w.size())
      throw UnequalSplit("assignment must split " + std::to_string(w.size()) + " units into equal halves");
  }
};

/// Units of the sampled buckets (bucket order, then unit order) with their
/// treatment indicators.
struct SampleDraw {
  std::vector<BucketId> buckets;
  std::vector<std::size_t> units;
  TreatmentAssignment assignment;
};

template <typename T>
SampleDraw make_draw(const BasicPopulation<T>& pop, std::vector<BucketId> buckets, TreatmentAssignment w) {
  SampleDraw d{std::move(buckets), {}, std::move(w)};
  for (auto b : d.buckets) {
    const auto& m = pop.members(b);
    d.units.insert(d.units.end(), m.begin(), m.end());
  }
  if (d.assignment.w.size() != d.units.size())
    throw InvalidParams("assignment length does not match the number of sampled units");
  return d;
}

/// Population average treatment effect at time t.
template <typename T>
double ate_true(const BasicPopulation<T>& pop, std::size_t t) {
  long double s = 0;
  const auto& a = pop.y1(t);
  const auto& b = pop.y0(t);
  for (std::size_t i = 0; i < pop.size(); ++i) s += static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
  return static_cast<double>(s / static_cast<long double>(pop.size()));
}

/// Average treatment effect over the units of a subset of buckets.
template <typename T>
double ate_subset(const BasicPopulation<T>& pop, std::span<const BucketId> buckets, std::size_t t) {
  if (buckets.empty()) throw InvalidParams("bucket subset must be non-empty");
  long double s = 0;
  std::size_t n = 0;
  const auto& a = pop.y1(t);
  const auto& b = pop.y0(t);
  for (auto bk : buckets)
    for (auto i : pop.members(bk)) {
      s += static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
      ++n;
    }
  return static_cast<double>(s / static_cast<long double>(n));
}

/// Change of the subset ATE between an earlier and a later time.
template <typename T>
double ate_tilde(const BasicPopulation<T>& pop, std::span<const BucketId> buckets, std::size_t t_early,
                 std::size_t t_late) {
  return ate_subset(pop, buckets, t_late) - ate_subset(pop, buckets, t_early);
}

/// Bias of sampling from `subset` instead of the full population when the
/// subset is random with respect to outcomes at `t_early`: the population
/// ATE drift minus the subset ATE drift.
template <typename T>
double carry_over_bias(const BasicPopulation<T>& pop, std::span<const BucketId> subset, std::size_t t_early,
                       std::size_t t_late) {
  return (ate_true(pop, t_late) - ate_true(pop, t_early)) - ate_tilde(pop, subset, t_early, t_late);
}

/// Difference in means with two equal arms:
/// (2/N_S) (sum_{W=1} Y(1) - sum_{W=0} Y(0)).
template <typename T>
double diff_in_means(const SampleDraw& draw, const BasicPopulation<T>& pop, std::size_t t) {
  draw.assignment.require_equal_split();
  const auto& y1 = pop.y1(t);
  const auto& y0 = pop.y0(t);
  long double s = 0;
  for (std::size_t j = 0; j < draw.units.size(); ++j) {
    const auto i = draw.units[j];
    s += draw.assignment.w[j] ? static_cast<long double>(y1[i]) : -static_cast<long double>(y0[i]);
  }
  return static_cast<double>(2.0L * s / static_cast<long double>(draw.units.size()));
}

/// Horvitz-Thompson estimate of the population mean of arm `arm`, with the
/// equal inclusion probability pi = N_S / N of equal-size bucket sampling.
template <typename T>
double ht_mean(const SampleDraw& draw, const BasicPopulation<T>& pop, std::size_t t, int arm) {
  draw.assignment.require_equal_split();
  const auto& y = arm ? pop.y1(t) : pop.y0(t);
  const long double n = static_cast<long double>(pop.size());
  const long double ns = static_cast<long double>(draw.units.size());
  const long double pi = ns / n;
  long double s = 0;
  for (std::size_t j = 0; j < draw.units.size(); ++j)
    if (draw.assignment.w[j] == arm) s += static_cast<long double>(y[draw.units[j]]) / pi;
  return static_cast<double>(ns / (n * (ns / 2)) * s);
}

struct ArmSummary {
  std::size_t n = 0;
  double mean = 0;
  double variance = 0;  // unbiased
};

template <typename T>
ArmSummary arm_summary(const SampleDraw& draw, const BasicPopulation<T>& pop, std::size_t t, int arm) {
  const auto& y = arm ? pop.y1(t) : pop.y0(t);
  ArmSummary s;
  long double sum = 0;
  for (std::size_t j = 0; j < draw.units.size(); ++j)
    if (draw.assignment.w[j] == arm) {
      sum += static_cast<long double>(y[draw.units[j]]);
      ++s.n;
    }
  if (s.n == 0) return s;
  const long double mean = sum / static_cast<long double>(s.n);
  long double ss = 0;
  for (std::size_t j = 0; j < draw.units.size(); ++j)
    if (draw.assignment.w[j] == arm) {
      const long double d = static_cast<long double>(y[draw.units[j]]) - mean;
      ss += d * d;
    }
  s.mean = static_cast<double>(mean);
  s.variance = s.n > 1 ? static_cast<double>(ss / static_cast<long double>(s.n - 1)) : 0.0;
  return s;
}

/// Welch two-sample t statistic (treatment minus control).
template <typename T>
double welch_t(const SampleDraw& draw, const BasicPopulation<T>& pop, std::size_t t) {
  const ArmSummary a1 = arm_summary(draw, pop, t, 1);
  const ArmSummary a0 = arm_summary(draw, pop, t, 0);
  if (a1.n < 2 || a0.n < 2) throw ZeroVariance("each arm needs at least two units");
  const double se2 = a1.variance / static_cast<double>(a1.n) + a0.variance / static_cast<double>(a0.n);
  if (!(se2 > 0)) throw ZeroVariance("both arms have zero variance");
  return (a1.mean - a0.mean) / std::sqrt(se2);
}

/// Visits every k-subset of {0..n-1} in lexicographic order.
inline void for_each_combination(std::size_t n, std::size_t k, const std::function<void(std::span<const std::size_t>)>& f) {
  if (k > n) return;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    f(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

/// Exact design expectation of the difference-in-means estimator next to
/// the ATE it targets.
struct EnumerationResult {
  BigRational mean_estimate;
  BigRational ate;
  BigInt num_draws;  // (subsets x) samples x assignments visited
  bool unbiased() const { return mean_estimate == ate; }
};

inline constexpr std::uint64_t kEnumerationLimit = 10'000'000;

namespace detail {

template <std::integral T>
BigRational exact_ate(const BasicPopulation<T>& pop, std::size_t t) {
  BigInt s = 0;
  for (std::size_t i = 0; i < pop.size(); ++i) s += BigInt(pop.y1(t)[i]) - BigInt(pop.y0(t)[i]);
  return BigRational(s, BigInt(pop.size()));
}

// Mean of the estimator over every sample of `sample_buckets` buckets drawn
// from `pool` and every equal split of each sample.
template <std::integral T>
BigRational exact_mean_over_pool(const BasicPopulation<T>& pop, const std::vector<BucketId>& pool,
                                 std::size_t sample_buckets, std::size_t t, BigInt& visited) {
  const auto& y1 = pop.y1(t);
  const auto& y0 = pop.y0(t);
  const std::size_t ns = sample_buckets * pop.bucket_size();
  BigInt total = 0;
  BigInt count = 0;
  std::vector<std::size_t> units;
  for_each_combination(pool.size(), sample_buckets, [&](std::span<const std::size_t> pick) {
    units.clear();
    for (auto p : pick) {
      const auto& m = pop.members(pool[p]);
      units.insert(units.end(), m.begin(), m.end());
    }
    // sum_{W=1} y1 - sum_{W=0} y0 == sum_{W=1} (y1 + y0) - sum_all y0
    std::int64_t base = 0;
    for (auto i : units) base -= static_cast<std::int64_t>(y0[i]);
    std::int64_t acc = 0;
    std::uint64_t n_assign = 0;
    for_each_combination(ns, ns / 2, [&](std::span<const std::size_t> treated) {
      std::int64_t d = base;
      for (auto j : treated) d += static_cast<std::int64_t>(y1[units[j]]) + static_cast<std::int64_t>(y0[units[j]]);
      acc += d;
      ++n_assign;
    });
    total += acc;
    count += n_assign;
  });
  visited += count;
  // estimate_{s,j} = (2 / N_S) * d_{s,j}
  return BigRational(total * 2, count * BigInt(ns));
}

inline void check_enumeration_size(const BigInt& draws) {
  if (draws > kEnumerationLimit)
    throw TooLarge("enumeration would visit " + draws.str() + " draws (limit " +
                   std::to_string(kEnumerationLimit) + ")");
}

}  // namespace detail

/// Averages the estimator over every bucket sample of size `sample_buckets`
/// and every equal-split assignment, in exact rational arithmetic.
template <std::integral T>
EnumerationResult enumerate_unbiasedness(const BasicPopulation<T>& pop, std::size_t sample_buckets, std::size_t t) {
  pop.check_time(t);
  if (sample_buckets < 1 || sample_buckets > pop.num_buckets()) throw InvalidParams("need 1 <= sample_buckets <= B");
  const std::size_t ns = sample_buckets * pop.bucket_size();
  if (ns % 2 != 0) throw UnequalSplit("sample of " + std::to_string(ns) + " units cannot be split equally");
  detail::check_enumeration_size(binomial(pop.num_buckets(), sample_buckets) * binomial(ns, ns / 2));

  std::vector<BucketId> all(pop.num_buckets());
  for (std::size_t b = 0; b < all.size(); ++b) all[b] = BucketId{b};
  EnumerationResult r;
  r.num_draws = 0;
  r.mean_estimate = detail::exact_mean_over_pool(pop, all, sample_buckets, t, r.num_draws);
  r.ate = detail::exact_ate(pop, t);
  return r;
}

/// As enumerate_unbiasedness, but first averages over every available-bucket
/// subset of size `subset_size`, sampling only within the subset.
template <std::integral T>
EnumerationResult enumerate_restricted_unbiasedness(const BasicPopulation<T>& pop, std::size_t subset_size,
                                                    std::size_t sample_buckets, std::size_t t) {
  pop.check_time(t);
  if (subset_size < 1 || subset_size > pop.num_buckets()) throw InvalidParams("need 1 <= subset_size <= B");
  if (sample_buckets < 1 || sample_buckets > subset_size)
    throw InvalidParams("need 1 <= sample_buckets <= subset_size");
  const std::size_t ns = sample_buckets * pop.bucket_size();
  if (ns % 2 != 0) throw UnequalSplit("sample of " + std::to_string(ns) + " units cannot be split equally");
  detail::check_enumeration_size(binomial(pop.num_buckets(), subset_size) * binomial(subset_size, sample_buckets) *
                                 binomial(ns, ns / 2));

  EnumerationResult r;
  r.num_draws = 0;
  BigRational sum = 0;
  std::size_t subsets = 0;
  std::vector<BucketId> pool;
  for_each_combination(pop.num_buckets(), subset_size, [&](std::span<const std::size_t> pick) {
    pool.clear();
    for (auto p : pick) pool.push_back(BucketId{p});
    sum += detail::exact_mean_over_pool(pop, pool, sample_buckets, t, r.num_draws);
    ++subsets;
  });
  r.mean_estimate = sum / BigRational(BigInt(subsets));
  r.ate = detail::exact_ate(pop, t);
  return r;
}

namespace detail {

// Case rules on the 2x2 counts of two binary vectors of length n with
// a and b ones and c shared ones.
inline std::optional<double> cor_star_counts(std::uint64_t n, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  const bool var_a = a > 0 && a < n;
  const bool var_b = b > 0 && b < n;
  if (var_a && var_b) {
    const long double ln = n, la = a, lb = b, lc = c;
    const long double r = (ln * lc - la * lb) / std::sqrt(la * (ln - la) * lb * (ln - lb));
    return static_cast<double>(std::clamp(r, -1.0L, 1.0L));
  }
  if (a == n || b == n) return 0.0;
  if (a == 0 && b == 0) return 1.0;
  return std::nullopt;
}

}  // namespace detail

/// Pearson correlation of two 0/1 vectors extended with: 0 when either
/// vector is all ones, 1 when both are all zeros, and NA (nullopt) when one
/// is all zeros and the other varies.
inline std::optional<double> cor_star(const BitVector& x, const BitVector& y) {
  if (x.size() != y.size()) throw LengthMismatch("vectors of length " + std::to_string(x.size()) + " and " +
                                                 std::to_string(y.size()));
  if (x.size() == 0) throw InvalidParams("vectors must be non-empty");
  return detail::cor_star_counts(x.size(), x.count(), y.count(), x.count_and(y));
}

inline std::optional<double> cor_star(std::span<const std::uint8_t> x, std::span<const std::uint8_t> y) {
  if (x.size() != y.size()) throw LengthMismatch("vectors of length " + std::to_string(x.size()) + " and " +
                                                 std::to_string(y.size()));
  return cor_star(BitVector::from_bits(x), BitVector::from_bits(y));
}

/// Daily availability (B_t) and sampling (A_t) vectors of one program.
struct BinaryVectorSeries {
  std::vector<AvailabilityVector> availability;
  std::vector<SamplingVector> sampling;
};

struct DeltaEstimate {
  std::optional<int> delta_hat;                  // nullopt: no lag <= T-1 qualified
  std::vector<std::optional<double>> mean_cor;   // index lag-1, lags 1..T-1
  std::vector<std::size_t> terms;                // non-NA terms per lag (T*)
};

inline constexpr double kDefaultDeltaTolerance = 0.01;

/// Smallest lag d >= 1 whose mean cor*(B_t, B_{t+d}) over non-NA terms is
/// within `tolerance` of zero.
inline DeltaEstimate delta_hat(std::span<const BitVector> series, double tolerance = kDefaultDeltaTolerance) {
  const std::size_t T = series.size();
  if (T < 2) throw EmptySeries("need at least two days, got " + std::to_string(T));
  if (!(tolerance >= 0)) throw InvalidParams("tolerance must be >= 0");
  DeltaEstimate est;
  bool any = false;
  for (std::size_t lag = 1; lag < T; ++lag) {
    long double sum = 0;
    std::size_t terms = 0;
    for (std::size_t t = 0; t + lag < T; ++t) {
      const auto c = cor_star(series[t], series[t + lag]);
      if (c) {
        sum += *c;
        ++terms;
      }
    }
    est.terms.push_back(terms);
    if (terms == 0) {
      est.mean_cor.push_back(std::nullopt);
      continue;
    }
    any = true;
    const double mean = static_cast<double>(sum / static_cast<long double>(terms));
    est.mean_cor.push_back(mean);
    if (!est.delta_hat && std::abs(mean) <= tolerance) est.delta_hat = static_cast<int>(lag);
  }
  if (!any) throw AllNA("every lag has only NA correlation terms");
  return est;
}

inline DeltaEstimate delta_hat(const BinaryVectorSeries& series, double tolerance = kDefaultDeltaTolerance) {
  std::vector<BitVector> days;
  days.reserve(series.availability.size());
  for (const auto& d : series.availability) days.push_back(d.bits);
  return delta_hat(days, tolerance);
}

}  // namespace bucketreuse
