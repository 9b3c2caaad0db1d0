// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace opsched {

enum class ErrorKind {
  CycleDetected,
  DanglingReference,
  DuplicateProducer,
  InplaceSizeMismatch,
  NonDenseIds,
  InvalidOperator,
  InvalidTensor,
  NoGraphOutput,
  NotTopological,
  NotAPermutation,
  UnknownOperator,
  GraphTooLarge,
  MemoBudgetExceeded,
  CapacityExceeded,
  InvalidConfig,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every domain failure in the library is reported as an Error carrying its kind.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind), detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string &detail() const noexcept { return detail_; }

private:
  ErrorKind kind_;
  std::string detail_;
};

/// Raised by the arena simulator when an allocation would cross the capacity.
class CapacityExceeded : public Error {
public:
  CapacityExceeded(std::size_t step, std::uint64_t attempted_size,
                   std::uint64_t live_bytes, std::uint64_t capacity);

  std::size_t step() const noexcept { return step_; }
  std::uint64_t attempted_size() const noexcept { return attempted_size_; }
  std::uint64_t live_bytes() const noexcept { return live_bytes_; }

private:
  std::size_t step_;
  std::uint64_t attempted_size_;
  std::uint64_t live_bytes_;
};

} // namespace opsched
