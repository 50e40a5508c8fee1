#pragma once

#include <stdexcept>
#include <string>

namespace sfl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or architecture shapes that do not line up. `unit` is the index of
// the offending unit, or -1 when the mismatch is not tied to one unit.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what, int unit = -1)
      : Error(unit >= 0 ? "unit " + std::to_string(unit) + ": " + what : what), unit_(unit) {}
  int unit() const noexcept { return unit_; }

 private:
  int unit_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : Error(key.empty() ? what : key + ": " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class BudgetError : public Error {
 public:
  using Error::Error;
};

}  // namespace sfl
