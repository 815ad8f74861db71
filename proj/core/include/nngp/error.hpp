#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nngp {

enum class ErrorKind {
  parameter_domain,
  duplicate_location,
  factorization,
  dimension,
  numerical,
  configuration,
  io,
  state,
};

const char* to_string(ErrorKind kind) noexcept;

/// Base class for every failure raised by the library. The kind is stable and
/// is what the command-line front end maps onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when a Cholesky pivot is not positive. `index` is the row of the
/// NNGP factor or the pivot of the sparse factorization.
class FactorizationError : public Error {
 public:
  FactorizationError(std::size_t index, const std::string& what)
      : Error(ErrorKind::factorization, what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class DuplicateLocationError : public Error {
 public:
  DuplicateLocationError(std::size_t first, std::size_t second,
                         const std::string& what)
      : Error(ErrorKind::duplicate_location, what),
        first_(first),
        second_(second) {}

  std::size_t first() const noexcept { return first_; }
  std::size_t second() const noexcept { return second_; }

 private:
  std::size_t first_;
  std::size_t second_;
};

}  // namespace nngp
