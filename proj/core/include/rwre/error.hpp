#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rwre {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments: shapes, bounds, non-stochastic rows, malformed data.
class InputError : public Error {
 public:
  using Error::Error;
};

// The model itself is unusable (reducible/periodic chain, zero stationary mass,
// support outside the ellipticity band).
class ModelInvalidError : public Error {
 public:
  using Error::Error;
};

class IdentifiabilityError : public ModelInvalidError {
 public:
  using ModelInvalidError::ModelInvalidError;
};

// Operation requires a transient/ballistic model and was given one that is not.
class RefusalError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), path_(path), line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

}  // namespace rwre
