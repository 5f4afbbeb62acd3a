#pragma once

#include <stdexcept>
#include <string>

namespace deepc {

enum class ErrorKind {
  insufficient_data,
  dimension_mismatch,
  invalid_argument,
  index_out_of_range,
  not_positive_semidefinite,
  io,
  config,
};

/// Structured error carrying a machine-checkable kind next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace deepc
