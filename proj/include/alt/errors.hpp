#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace alt {

// Bad input or configuration detected before any work is done.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient. `index` names the offending batch row or step.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t index)
      : std::runtime_error(what + " (index " + std::to_string(index) + ")"), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// Transport failure talking to a feedback or judge endpoint, after retries.
class ExternalServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A response came back but does not follow the expected format.
class UnparseableResponse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace alt
