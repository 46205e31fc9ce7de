#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fwm {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto stable exit codes (see tools/fwmpair.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs violating a documented precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Configuration document problems; carries the offending field path.
class ConfigError : public InvalidInput {
 public:
  ConfigError(std::string field, const std::string& what)
      : InvalidInput(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class StepSizeError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class ResolutionError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class BudgetError : public InvalidInput {
 public:
  BudgetError(std::int64_t overflow_words, const std::string& what)
      : InvalidInput(what), overflow_words_(overflow_words) {}
  std::int64_t overflow_words() const noexcept { return overflow_words_; }

 private:
  std::int64_t overflow_words_;
};

// Time-ordered data arrived out of order.
class OrderingError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// A value does not fit the representable range (e.g. 56-bit timestamps).
class RangeError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Division by a zero normalisation or similar domain violation.
class DomainError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bad magic / unsupported version.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Structurally damaged data; offset is the byte position where decoding failed.
class CorruptionError : public FormatError {
 public:
  CorruptionError(std::uint64_t offset, const std::string& what)
      : FormatError(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace fwm
