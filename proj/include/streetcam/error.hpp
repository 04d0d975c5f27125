#pragma once

#include <stdexcept>
#include <string>

namespace streetcam {

/// Bad input data: missing files, malformed features, violated preconditions.
/// The CLI maps it to exit status 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad command-line usage or configuration (exit status 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace streetcam
