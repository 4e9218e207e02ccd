#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sinkdesc {

enum class ErrorKind {
  InvalidArgument,
  EmptySupport,
  NegativeWeight,
  ZeroMass,
  NonFinite,
  OutsideDomain,
  DimensionMismatch,
  SingleAtom,
  AllBelowThreshold,
  DimensionTooHigh,
  MaxIterations,
  BacktrackingFailed,
  Io,
  Parse,
};

std::string_view to_string(ErrorKind kind);

// Numerical failures (as opposed to bad input) map to a distinct CLI exit code.
bool is_numerical(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sinkdesc
