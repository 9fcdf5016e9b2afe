#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bucketreuse/bitvector.hpp"
#include "bucketreuse/bucketing.hpp"
#include "bucketreuse/errors.hpp"
#include "bucketreuse/probability.hpp"
#include "bucketreuse/rng.hpp"

namespace bucketreuse {

/// Bit b is 1 iff bucket b is free to be sampled into a new exclusive experiment.
struct AvailabilityVector {
  BitVector bits;
};

/// Bit b is 1 iff bucket b was sampled into an experiment on the given day.
struct SamplingVector {
  BitVector bits;
};

struct Experiment {
  std::string id;
  double size_fraction = 0;
  std::uint64_t num_buckets = 0;
  int length_days = 1;
  int start_day = 1;
  std::vector<BucketId> buckets;  // sorted ascending
  std::string program;

  int end_day() const { return start_day + length_days - 1; }
};

/// Half-up rounded number of buckets for a relative experiment size.
inline std::uint64_t buckets_for_fraction(double fraction, std::uint64_t num_buckets) {
  if (!(fraction > 0 && fraction <= 1)) throw InvalidParams("fraction must be in (0, 1]");
  const std::uint64_t k = round_buckets(fraction, num_buckets);
  if (k == 0)
    throw FractionTooSmall("fraction " + std::to_string(fraction) + " of " + std::to_string(num_buckets) +
                           " buckets rounds to 0");
  return k;
}

/// Uniform draw of k = buckets_for_fraction(fraction, B) distinct buckets
/// out of all B, ignoring any program's availability (Floyd's algorithm).
inline std::vector<BucketId> sample_nonexclusive(std::uint64_t num_buckets, double fraction, Rng& rng) {
  const std::uint64_t k = buckets_for_fraction(fraction, num_buckets);
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(k * 2);
  for (std::uint64_t j = num_buckets - k; j < num_buckets; ++j) {
    const std::uint64_t t = uniform_index(rng, j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<BucketId> out;
  out.reserve(k);
  for (auto b : chosen) out.push_back(BucketId{b});
  std::sort(out.begin(), out.end());
  return out;
}

struct ProgramSnapshot {
  AvailabilityVector availability;
  SamplingVector sampled_today;
};

/// One program of exclusive experiments over a discrete day clock.
///
/// Invariant: availability bit b is 0 exactly when b belongs to an active
/// experiment, so #available + sum of active bucket counts == B.
/// Stops happen when the clock advances; starts requested afterwards on the
/// same day can reuse the freed buckets.
class ProgramState {
 public:
  explicit ProgramState(std::uint64_t num_buckets, std::string program = "program", std::uint64_t rng_seed = 0)
      : num_buckets_(num_buckets),
        program_(std::move(program)),
        rng_seed_(rng_seed),
        availability_{BitVector(num_buckets, true)},
        free_(num_buckets) {
    if (num_buckets == 0) throw InvalidParams("number of buckets must be >= 1");
    if (num_buckets > UINT32_MAX) throw InvalidParams("at most 2^32-1 buckets supported");
    std::iota(free_.begin(), free_.end(), 0u);
  }

  int clock() const { return clock_; }
  std::uint64_t num_buckets() const { return num_buckets_; }
  const std::string& program() const { return program_; }
  std::uint64_t rng_seed() const { return rng_seed_; }
  const std::vector<Experiment>& active() const { return active_; }
  const AvailabilityVector& availability() const { return availability_; }
  std::uint64_t available_count() const { return free_.size(); }
  std::uint64_t occupied_count() const { return num_buckets_ - free_.size(); }
  double occupied_fraction() const {
    return static_cast<double>(occupied_count()) / static_cast<double>(num_buckets_);
  }
  /// Currently free buckets, in no particular order.
  std::span<const std::uint32_t> available_buckets() const { return free_; }

  /// Starts an experiment on the current day with k buckets drawn uniformly
  /// without replacement from the free buckets.
  Experiment start_experiment(double size_fraction, int length_days, Rng& rng, std::string id = {}) {
    if (length_days < 1) throw InvalidParams("experiment length must be >= 1 day");
    const std::uint64_t k = buckets_for_fraction(size_fraction, num_buckets_);
    if (k > free_.size())
      throw InsufficientBuckets("need " + std::to_string(k) + " buckets, " + std::to_string(free_.size()) +
                                " available");
    Experiment e;
    ++started_;
    e.id = id.empty() ? program_ + "-" + std::to_string(started_) : std::move(id);
    e.size_fraction = size_fraction;
    e.num_buckets = k;
    e.length_days = length_days;
    e.start_day = clock_;
    e.program = program_;
    e.buckets.reserve(k);
    // Partial Fisher-Yates from the back of the free list.
    for (std::uint64_t i = 0; i < k; ++i) {
      const std::size_t last = free_.size() - 1;
      const std::size_t j = static_cast<std::size_t>(uniform_index(rng, free_.size()));
      std::swap(free_[j], free_[last]);
      const std::uint32_t b = free_.back();
      free_.pop_back();
      availability_.bits.reset(b);
      e.buckets.push_back(BucketId{b});
    }
    std::sort(e.buckets.begin(), e.buckets.end());
    active_.push_back(std::move(e));
    return active_.back();
  }

  /// Increments the clock and stops every experiment whose last day has
  /// passed, returning them in start order.
  std::vector<Experiment> advance_day() {
    ++clock_;
    std::vector<Experiment> stopped;
    auto keep = std::stable_partition(active_.begin(), active_.end(),
                                      [&](const Experiment& e) { return e.end_day() >= clock_; });
    for (auto it = keep; it != active_.end(); ++it) {
      for (auto b : it->buckets) release(static_cast<std::uint32_t>(b.index));
      stopped.push_back(std::move(*it));
    }
    active_.erase(keep, active_.end());
    return stopped;
  }

  /// Stops an active experiment before its scheduled end.
  Experiment stop_experiment(const std::string& id) {
    auto it = std::find_if(active_.begin(), active_.end(), [&](const Experiment& e) { return e.id == id; });
    if (it == active_.end()) throw InvalidParams("no active experiment '" + id + "'");
    Experiment e = std::move(*it);
    active_.erase(it);
    for (auto b : e.buckets) release(static_cast<std::uint32_t>(b.index));
    return e;
  }

  /// Availability plus the union of buckets of experiments started today.
  ProgramSnapshot snapshot() const {
    ProgramSnapshot s{availability_, SamplingVector{BitVector(num_buckets_)}};
    for (const auto& e : active_)
      if (e.start_day == clock_)
        for (auto b : e.buckets) s.sampled_today.bits.set(b.index);
    return s;
  }

 private:
  void release(std::uint32_t b) {
    free_.push_back(b);
    availability_.bits.set(b);
  }

  std::uint64_t num_buckets_;
  std::string program_;
  std::uint64_t rng_seed_;
  int clock_ = 1;
  std::uint64_t started_ = 0;
  std::vector<Experiment> active_;
  AvailabilityVector availability_;
  std::vector<std::uint32_t> free_;
};

inline Experiment start_experiment(ProgramState& state, double size_fraction, int length_days, Rng& rng) {
  return state.start_experiment(size_fraction, length_days, rng);
}

inline std::vector<Experiment> advance_day(ProgramState& state) { return state.advance_day(); }

inline ProgramSnapshot snapshot(const ProgramState& state) { return state.snapshot(); }

}  // namespace bucketreuse
