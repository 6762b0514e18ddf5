#pragma once

#include <stdexcept>
#include <string>

namespace qnls {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
  virtual int exit_code() const noexcept { return 1; }
};

class ParameterError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "parameter"; }
  int exit_code() const noexcept override { return 2; }
};

class ConstraintError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "constraint"; }
  int exit_code() const noexcept override { return 2; }
};

class AliasingError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "aliasing"; }
  int exit_code() const noexcept override { return 2; }
};

class BudgetExceeded : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "budget_exceeded"; }
  int exit_code() const noexcept override { return 3; }
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double time)
      : Error(what + " at t=" + std::to_string(time)), time_(time) {}
  const char* kind() const noexcept override { return "integration"; }
  int exit_code() const noexcept override { return 4; }
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

// Counts enumeration visits and throws once the limit is crossed.
class Budget {
 public:
  static constexpr unsigned long long kDefault = 1000000000ULL;

  explicit Budget(unsigned long long limit = kDefault) : limit_(limit) {}

  void charge(unsigned long long n) {
    used_ += n;
    if (used_ > limit_) {
      throw BudgetExceeded("enumeration budget of " + std::to_string(limit_) +
                           " tuple visits exceeded");
    }
  }
  unsigned long long used() const { return used_; }
  unsigned long long limit() const { return limit_; }

 private:
  unsigned long long limit_;
  unsigned long long used_ = 0;
};

}  // namespace qnls
