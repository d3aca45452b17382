#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lmr {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed on-disk data. Carries the byte offset where parsing failed.
class FormatError : public Error {
public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::uint64_t offset_;
};

class ValidationError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// A pipeline stage was run before the stage that produces its inputs.
class DependencyError : public Error {
public:
  DependencyError(const std::string& what, std::string missing_stage)
      : Error(what), stage_(std::move(missing_stage)) {}
  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

}  // namespace lmr
