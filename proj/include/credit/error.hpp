#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace credit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix sizes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An argument outside the domain of the operation (negative ratio, t = 0, bad index ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A linear system that cannot be solved (singular, spectral radius >= 1, reducible chain).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration. `field()` names the offending JSON path.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DomainError(what);
}

inline void require_dims(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected size " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

}  // namespace detail
}  // namespace credit
