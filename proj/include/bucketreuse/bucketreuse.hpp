#pragma once

#include "bucketreuse/bitvector.hpp"
#include "bucketreuse/bucketing.hpp"
#include "bucketreuse/coordination.hpp"
#include "bucketreuse/errors.hpp"
#include "bucketreuse/estimation.hpp"
#include "bucketreuse/io.hpp"
#include "bucketreuse/probability.hpp"
#include "bucketreuse/rng.hpp"
#include "bucketreuse/selftest.hpp"
#include "bucketreuse/simulation.hpp"

namespace bucketreuse {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace bucketreuse
