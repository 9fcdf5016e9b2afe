#pragma once

#include <stdexcept>
#include <string>

namespace bucketreuse {

// Base class for every error raised by the library. The CLI maps these to
// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define BUCKETREUSE_DEFINE_ERROR(Name)              \
  class Name : public Error {                       \
   public:                                          \
    explicit Name(const std::string& what)          \
        : Error(std::string(#Name ": ") + what) {}  \
  }

BUCKETREUSE_DEFINE_ERROR(TooFewIds);
BUCKETREUSE_DEFINE_ERROR(Overflow);
BUCKETREUSE_DEFINE_ERROR(FractionTooSmall);
BUCKETREUSE_DEFINE_ERROR(InsufficientBuckets);
BUCKETREUSE_DEFINE_ERROR(InvalidParams);
BUCKETREUSE_DEFINE_ERROR(UnknownTime);
BUCKETREUSE_DEFINE_ERROR(UnequalSplit);
BUCKETREUSE_DEFINE_ERROR(ZeroVariance);
BUCKETREUSE_DEFINE_ERROR(TooLarge);
BUCKETREUSE_DEFINE_ERROR(LengthMismatch);
BUCKETREUSE_DEFINE_ERROR(EmptySeries);
BUCKETREUSE_DEFINE_ERROR(AllNA);
BUCKETREUSE_DEFINE_ERROR(ConfigInvalid);

#undef BUCKETREUSE_DEFINE_ERROR

}  // namespace bucketreuse
