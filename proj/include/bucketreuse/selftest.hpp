#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bucketreuse/estimation.hpp"
#include "bucketreuse/probability.hpp"
#include "bucketreuse/rng.hpp"

namespace bucketreuse {

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Tiny integer population: B in 2..5, N_B in 1..3, two time indices,
/// outcomes uniform in [-9, 9].
inline IntegerPopulation random_tiny_population(Rng& rng) {
  const std::uint64_t B = 2 + uniform_index(rng, 4);
  const std::uint64_t NB = 1 + uniform_index(rng, 3);
  std::uniform_int_distribution<std::int64_t> y(-9, 9);
  IntegerPopulation::Series y0(2, std::vector<std::int64_t>(B * NB)), y1 = y0;
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < B * NB; ++i) {
      y0[t][i] = y(rng);
      y1[t][i] = y(rng);
    }
  return IntegerPopulation::contiguous(B, NB, std::move(y0), std::move(y1));
}

/// Sample sizes (in buckets) whose unit count splits evenly.
template <typename T>
std::vector<std::size_t> even_sample_sizes(const BasicPopulation<T>& pop, std::size_t max_buckets) {
  std::vector<std::size_t> out;
  for (std::size_t k = 1; k <= max_buckets; ++k)
    if ((k * pop.bucket_size()) % 2 == 0) out.push_back(k);
  return out;
}

inline std::vector<SelftestCheck> run_selftest(std::uint64_t seed, std::size_t populations = 20) {
  std::vector<SelftestCheck> checks;
  std::size_t cases = 0, failures = 0, restricted_cases = 0, restricted_failures = 0;
  for (std::size_t p = 0; p < populations; ++p) {
    Rng rng = derive_rng({seed, 0x5e1f, p});
    const auto pop = random_tiny_population(rng);
    for (std::size_t t = 0; t < pop.num_times(); ++t) {
      for (auto k : even_sample_sizes(pop, pop.num_buckets())) {
        ++cases;
        if (!enumerate_unbiasedness(pop, k, t).unbiased()) ++failures;
      }
      for (std::size_t m = 2; m <= pop.num_buckets(); ++m)
        for (auto k : even_sample_sizes(pop, m)) {
          ++restricted_cases;
          if (!enumerate_restricted_unbiasedness(pop, m, k, t).unbiased()) ++restricted_failures;
        }
    }
  }
  checks.push_back({"unbiasedness_enumeration", cases > 0 && failures == 0,
                    std::to_string(cases - failures) + "/" + std::to_string(cases) + " exact"});
  checks.push_back({"restricted_unbiasedness_enumeration", restricted_cases > 0 && restricted_failures == 0,
                    std::to_string(restricted_cases - restricted_failures) + "/" + std::to_string(restricted_cases) +
                        " exact"});

  std::size_t ids = 0, id_fail = 0;
  for (std::uint64_t B = 1; B <= 30; ++B)
    for (std::uint64_t k = 1; k <= B; ++k) {
      ++ids;
      if (!counting_identities_check(B, k)) ++id_fail;
    }
  checks.push_back({"counting_identities", id_fail == 0,
                    std::to_string(ids - id_fail) + "/" + std::to_string(ids) + " exact"});

  // Mirror property: y1 == y0 gives mean estimate 0 over every split.
  std::size_t mirror = 0, mirror_fail = 0;
  for (std::size_t p = 0; p < populations; ++p) {
    Rng rng = derive_rng({seed, 0x3177, p});
    const auto base = random_tiny_population(rng);
    IntegerPopulation::Series y0{base.y0(0)};
    const auto pop = IntegerPopulation::contiguous(base.num_buckets(), base.bucket_size(), y0, y0);
    for (auto k : even_sample_sizes(pop, pop.num_buckets())) {
      ++mirror;
      if (enumerate_unbiasedness(pop, k, 0).mean_estimate != 0) ++mirror_fail;
    }
  }
  checks.push_back({"mirror_property", mirror > 0 && mirror_fail == 0,
                    std::to_string(mirror - mirror_fail) + "/" + std::to_string(mirror) + " zero"});
  return checks;
}

}  // namespace bucketreuse
