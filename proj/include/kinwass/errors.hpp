#pragma once

#include <stdexcept>
#include <string>

namespace kinwass {

// Raised when a quantity leaves the small-distance regime where a bound or
// inverse is defined.
class RegimeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// The implicit D_p equation has no monotone bracket.
class WellPosednessError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class CflError : public std::runtime_error {
 public:
  CflError(const std::string& msg, std::size_t particle)
      : std::runtime_error(msg), particle_(particle) {}
  std::size_t particle() const { return particle_; }

 private:
  std::size_t particle_;
};

class SinkhornError : public std::runtime_error {
 public:
  SinkhornError(const std::string& msg, double residual)
      : std::runtime_error(msg), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Problem too large for the exact solvers.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace kinwass
