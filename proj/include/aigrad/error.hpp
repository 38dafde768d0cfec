#pragma once

#include <stdexcept>
#include <string>

namespace aigrad {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define AIGRAD_DEFINE_ERROR(Name)                   \
  class Name : public Error {                       \
   public:                                          \
    explicit Name(const std::string& what)          \
        : Error(std::string(#Name ": ") + what) {}  \
  }

// Input validation
AIGRAD_DEFINE_ERROR(ConfigError);
AIGRAD_DEFINE_ERROR(DomainError);
AIGRAD_DEFINE_ERROR(TiltOutOfRange);
AIGRAD_DEFINE_ERROR(IoError);

// Peak analysis
AIGRAD_DEFINE_ERROR(NoConvergence);
AIGRAD_DEFINE_ERROR(DegenerateWindow);
AIGRAD_DEFINE_ERROR(MisalignedTraces);
AIGRAD_DEFINE_ERROR(ZeroSignal);

// Ellipse fitting
AIGRAD_DEFINE_ERROR(DegenerateConic);
AIGRAD_DEFINE_ERROR(TooFewPoints);
AIGRAD_DEFINE_ERROR(NoMinimumInInterval);

// Pipeline statistics
AIGRAD_DEFINE_ERROR(GroupTooSmall);
AIGRAD_DEFINE_ERROR(NotConverged);
AIGRAD_DEFINE_ERROR(NoPairs);
AIGRAD_DEFINE_ERROR(SeriesTooShort);
AIGRAD_DEFINE_ERROR(ConstantSeries);
AIGRAD_DEFINE_ERROR(UnknownParameter);
AIGRAD_DEFINE_ERROR(IllConditioned);

#undef AIGRAD_DEFINE_ERROR

}  // namespace aigrad
