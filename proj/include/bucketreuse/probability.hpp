#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "bucketreuse/errors.hpp"

namespace bucketreuse {

using BigInt = boost::multiprecision::cpp_int;
using BigRational = boost::multiprecision::cpp_rational;

/// Exact binomial coefficient C(n, k); zero when k > n.
inline BigInt binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  BigInt r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r *= n - k + i;
    r /= i;  // exact: r is C(n-k+i, i) after this step
  }
  return r;
}

/// Hypergeometric law of the number of successes in `draws` draws without
/// replacement from `population` items of which `successes` are successes.
struct HypergeomParams {
  std::uint64_t population = 0;
  std::uint64_t successes = 0;
  std::uint64_t draws = 0;

  void validate() const {
    if (successes > population || draws > population)
      throw InvalidParams("hypergeometric requires successes <= population and draws <= population (got K=" +
                          std::to_string(population) + ", Ks=" + std::to_string(successes) +
                          ", n=" + std::to_string(draws) + ")");
  }
  std::uint64_t support_min() const {
    const std::uint64_t failures = population - successes;
    return draws > failures ? draws - failures : 0;
  }
  std::uint64_t support_max() const { return std::min(successes, draws); }
  double mean() const {
    return population == 0 ? 0.0
                           : static_cast<double>(draws) * static_cast<double>(successes) /
                                 static_cast<double>(population);
  }
};

// Populations up to this size use exact big-integer binomials.
inline constexpr std::uint64_t kExactHypergeomLimit = 64;

namespace detail {

inline double exact_hypergeom_pmf(const HypergeomParams& p, std::uint64_t x) {
  const BigRational q(binomial(p.successes, x) * binomial(p.population - p.successes, p.draws - x),
                      binomial(p.population, p.draws));
  return q.convert_to<double>();
}

inline long double log_choose(std::uint64_t n, std::uint64_t k) {
  const auto ln = static_cast<long double>(n);
  const auto lk = static_cast<long double>(k);
  return std::lgammal(ln + 1) - std::lgammal(lk + 1) - std::lgammal(ln - lk + 1);
}

// Snap values within 1e-9 (relative) of an integer onto it, so that
// products like 0.47 * 1000 land on 470 and not 470.00000000000006.
inline double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) <= 1e-9 * std::max(1.0, std::abs(v)) ? r : v;
}

}  // namespace detail

/// Single-point hypergeometric pmf. Exact for population <= 64, log-gamma
/// evaluation in extended precision above that.
inline double hypergeom_pmf(const HypergeomParams& p, std::int64_t x) {
  p.validate();
  if (x < 0) return 0.0;
  const auto ux = static_cast<std::uint64_t>(x);
  if (ux < p.support_min() || ux > p.support_max()) return 0.0;
  if (p.population <= kExactHypergeomLimit) return detail::exact_hypergeom_pmf(p, ux);
  const long double lp = detail::log_choose(p.successes, ux) +
                         detail::log_choose(p.population - p.successes, p.draws - ux) -
                         detail::log_choose(p.population, p.draws);
  return static_cast<double>(std::exp(lp));
}

/// Full pmf table over the support. For large populations the table is
/// built from the mode outwards with the term-ratio recurrence and then
/// normalised, which keeps sum(pmf) == 1 to rounding.
class HypergeometricDistribution {
 public:
  explicit HypergeometricDistribution(const HypergeomParams& p) : params_(p) {
    p.validate();
    lo_ = p.support_min();
    hi_ = p.support_max();
    pmf_.assign(hi_ - lo_ + 1, 0.0);
    if (p.population <= kExactHypergeomLimit) {
      for (std::uint64_t x = lo_; x <= hi_; ++x) pmf_[x - lo_] = detail::exact_hypergeom_pmf(p, x);
      return;
    }
    const long double K = static_cast<long double>(p.population);
    const long double Ks = static_cast<long double>(p.successes);
    const long double n = static_cast<long double>(p.draws);
    auto mode = static_cast<std::uint64_t>(std::floor((n + 1) * (Ks + 1) / (K + 2)));
    mode = std::clamp(mode, lo_, hi_);

    std::vector<long double> w(pmf_.size(), 0.0L);
    w[mode - lo_] = 1.0L;
    for (std::uint64_t x = mode; x < hi_; ++x) {
      const long double lx = static_cast<long double>(x);
      const long double ratio = (Ks - lx) * (n - lx) / ((lx + 1) * (K - Ks - n + lx + 1));
      w[x + 1 - lo_] = w[x - lo_] * ratio;
    }
    for (std::uint64_t x = mode; x > lo_; --x) {
      const long double lx = static_cast<long double>(x);
      const long double ratio = lx * (K - Ks - n + lx) / ((Ks - lx + 1) * (n - lx + 1));
      w[x - 1 - lo_] = w[x - lo_] * ratio;
    }
    long double total = 0;
    for (auto v : w) total += v;
    for (std::size_t i = 0; i < w.size(); ++i) pmf_[i] = static_cast<double>(w[i] / total);
  }

  const HypergeomParams& params() const { return params_; }
  std::uint64_t support_min() const { return lo_; }
  std::uint64_t support_max() const { return hi_; }

  double pmf(std::int64_t x) const {
    if (x < 0) return 0.0;
    const auto ux = static_cast<std::uint64_t>(x);
    return ux < lo_ || ux > hi_ ? 0.0 : pmf_[ux - lo_];
  }

  /// P(lo < X <= hi) for real-valued bounds.
  double window(double lo, double hi) const {
    lo = detail::snap(lo);
    hi = detail::snap(hi);
    double s = 0;
    for (std::uint64_t x = lo_; x <= hi_; ++x) {
      const auto dx = static_cast<double>(x);
      if (dx > lo && dx <= hi) s += pmf_[x - lo_];
    }
    return std::min(s, 1.0);
  }

 private:
  HypergeomParams params_;
  std::uint64_t lo_ = 0;
  std::uint64_t hi_ = 0;
  std::vector<double> pmf_;
};

/// Probability that the share of "bad" buckets in a draw from a pool of bad
/// and neutral buckets falls in (center - margin, center + margin].
inline double bad_bucket_window_prob(std::uint64_t bad_pool, std::uint64_t neutral_pool, std::uint64_t draws,
                                     double center, double margin) {
  if (draws == 0) throw InvalidParams("draws must be >= 1");
  if (draws > bad_pool + neutral_pool) throw InvalidParams("draws exceed the available pool");
  if (!(margin >= 0)) throw InvalidParams("margin must be >= 0");
  const HypergeometricDistribution dist({bad_pool + neutral_pool, bad_pool, draws});
  const auto d = static_cast<double>(draws);
  return dist.window(d * (center - margin), d * (center + margin));
}

/// Half-up rounding of fraction * B to a whole number of buckets (no
/// minimum enforced here; see coordination::buckets_for_fraction).
inline std::uint64_t round_buckets(double fraction, std::uint64_t num_buckets) {
  if (!(fraction >= 0)) throw InvalidParams("fraction must be >= 0");
  const double v = detail::snap(fraction * static_cast<double>(num_buckets));
  return static_cast<std::uint64_t>(std::floor(v + 0.5));
}

/// Two experiments in different programs draw k1 and k2 of B buckets
/// independently; X = buckets shared. Returns P(X / k2 in (k1/B - m, k1/B + m]),
/// i.e. the share of experiment 2 that comes from experiment 1 lands within
/// +-m of its expectation.
inline double overlap_share_window_prob(std::uint64_t num_buckets, double frac1, double frac2,
                                        double share_margin) {
  if (num_buckets == 0) throw InvalidParams("number of buckets must be >= 1");
  if (!(share_margin > 0)) throw InvalidParams("margin must be > 0");
  const std::uint64_t k1 = round_buckets(frac1, num_buckets);
  const std::uint64_t k2 = round_buckets(frac2, num_buckets);
  if (k1 == 0 || k2 == 0 || k1 > num_buckets || k2 > num_buckets)
    throw InvalidParams("experiment fractions must map to between 1 and B buckets");
  const HypergeometricDistribution dist({num_buckets, k1, k2});
  const double center = static_cast<double>(k1) / static_cast<double>(num_buckets);
  const auto n2 = static_cast<double>(k2);
  return dist.window(n2 * (center - share_margin), n2 * (center + share_margin));
}

/// Experiment size at which `margin_pp` is read as a population-scale margin.
inline constexpr double kOverlapReferenceSize = 0.10;

/// Overlap probability with the margin quoted in population percentage
/// points for a 10% experiment; for other sizes the window scales with the
/// size of experiment 2 (share margin = margin_pp / 0.10). With margin 0.001:
/// B=1000 gives 0.23 at 5% and 0.27 at 10%; B=10000 gives 0.70 and 0.73.
inline double overlap_within_margin_prob(std::uint64_t num_buckets, double frac1, double frac2, double margin_pp) {
  if (!(margin_pp > 0)) throw InvalidParams("margin must be > 0");
  return overlap_share_window_prob(num_buckets, frac1, frac2, margin_pp / kOverlapReferenceSize);
}

/// Total buckets needed so that an experiment of relative size `smallest`
/// holds enough buckets (ceil(1/s)) to be split proportionally into another
/// experiment of the same size.
inline std::uint64_t min_buckets_for_smallest_experiment(double smallest) {
  if (!(smallest > 0 && smallest <= 1)) throw InvalidParams("smallest experiment size must be in (0, 1]");
  const double per_experiment = std::ceil(detail::snap(1.0 / smallest));
  return static_cast<std::uint64_t>(std::ceil(detail::snap(per_experiment / smallest)));
}

/// Number of distinct bucket samples, C(B, k).
inline BigInt num_bucket_samples(std::uint64_t num_buckets, std::uint64_t sample_buckets) {
  if (sample_buckets > num_buckets) throw InvalidParams("sample larger than population");
  return binomial(num_buckets, sample_buckets);
}

/// Checks C(B, k) == (B / k) * C(B - 1, k - 1) in exact rational arithmetic.
inline bool counting_identities_check(std::uint64_t num_buckets, std::uint64_t sample_buckets) {
  if (sample_buckets < 1 || sample_buckets > num_buckets)
    throw InvalidParams("need 1 <= sample_buckets <= B");
  const BigRational lhs(num_bucket_samples(num_buckets, sample_buckets));
  const BigRational rhs =
      BigRational(BigInt(num_buckets), BigInt(sample_buckets)) * BigRational(binomial(num_buckets - 1, sample_buckets - 1));
  return lhs == rhs;
}

}  // namespace bucketreuse
