#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ftp {

// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Token id, class label or element index outside its valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// A documented precondition of an operation was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid model, training or run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed file contents. Carries the byte offset where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// Checkpoint or corpus written by an incompatible format version.
class UnsupportedVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A uniqueness or size request exceeds what the sample space can supply.
class CapacityError : public std::runtime_error {
 public:
  CapacityError(const std::string& what, std::uint64_t bound)
      : std::runtime_error(what), bound_(bound) {}

  std::uint64_t bound() const noexcept { return bound_; }

 private:
  std::uint64_t bound_;
};

// Random generation could not satisfy its constraints within the retry budget.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged (non-finite loss or gradient).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Generated program tokens could not be decoded.
class DecodeError : public std::runtime_error {
 public:
  DecodeError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at token position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace ftp
