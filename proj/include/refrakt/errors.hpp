#pragma once

#include <stdexcept>
#include <string>

namespace refrakt {

/// Base for all library validation errors; the CLI maps these to exit code 1.
class RefraktError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file or record (bad CSV row, schema mismatch, ...).
class FormatError : public RefraktError {
 public:
  using RefraktError::RefraktError;
};

/// Invalid argument to an operation (bad window size, cutoff >= Nyquist, ...).
class ParamError : public RefraktError {
 public:
  using RefraktError::RefraktError;
};

}  // namespace refrakt
