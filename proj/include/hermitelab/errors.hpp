#pragma once

#include <stdexcept>
#include <string>

namespace hermitelab {

// Parameter outside the model's standing assumptions (H, q, r, times, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Mismatched lengths or grids.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Request whose cost exceeds a configured limit (chaos order, brute-force size).
class ResourceError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Quadrature or linear-algebra failure. `key` names the kernel or object involved.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::string key = {})
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Invalid configuration file or command line. `line` is 0 when not tied to a file line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::string key = {}, int line = 0)
      : std::runtime_error(what), key_(std::move(key)), line_(line) {}
  const std::string& key() const noexcept { return key_; }
  int line() const noexcept { return line_; }

 private:
  std::string key_;
  int line_;
};

}  // namespace hermitelab
