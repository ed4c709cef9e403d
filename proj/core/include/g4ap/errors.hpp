#pragma once

#include <stdexcept>
#include <string>

namespace g4ap {

// Error taxonomy shared by the whole engine. The CLI maps these onto
// process exit codes: contract/dimension -> 2, data/format -> 3, numeric -> 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated precondition or API misuse (bad rank, empty train set, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Shape / extent mismatch; the message names both shapes.
class DimensionError : public ContractError {
 public:
  explicit DimensionError(const std::string& msg) : ContractError(msg) {}
};

// NaN or non-finite values where finite math was required.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Bad input data: missing CSV columns, unparseable timestamps, ...
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Checkpoint container problems: wrong magic, unsupported version.
class FormatError : public DataError {
 public:
  explicit FormatError(const std::string& msg) : DataError(msg) {}
};

// Truncated or internally inconsistent checkpoint payload.
class CorruptionError : public FormatError {
 public:
  explicit CorruptionError(const std::string& msg) : FormatError(msg) {}
};

}  // namespace g4ap
