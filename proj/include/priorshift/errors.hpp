#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace priorshift {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments or configuration (CLI exit code 1).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Data violates a structural contract: duplicate ids, wrong answer counts,
/// dangling cross-references.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::uint64_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::uint64_t byte_offset_;
};

/// File system failures (CLI exit code 2).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace priorshift
