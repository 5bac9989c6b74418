#pragma once

#include <stdexcept>
#include <string>

namespace fastbkmr {

// Every failure raised by the library derives from Error. The category maps
// onto the CLI exit codes (config -> 1, data -> 2, numerical -> 3).
enum class ErrorCategory { Config, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

// Mismatched vector/matrix shapes. Carries both lengths.
class DimensionError : public DataError {
 public:
  DimensionError(const std::string& context, long expected, long actual)
      : DataError(context + ": dimension mismatch (expected " + std::to_string(expected) +
                  ", got " + std::to_string(actual) + ")"),
        expected_(expected),
        actual_(actual) {}

  long expected() const noexcept { return expected_; }
  long actual() const noexcept { return actual_; }

 private:
  long expected_;
  long actual_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorCategory::Numerical, what) {}
};

// Cholesky factorization that still failed at the largest allowed jitter.
class FactorizationError : public NumericalError {
 public:
  FactorizationError(const std::string& context, double final_jitter)
      : NumericalError(context + ": factorization failed at jitter " + std::to_string(final_jitter)),
        final_jitter_(final_jitter) {}

  double final_jitter() const noexcept { return final_jitter_; }

 private:
  double final_jitter_;
};

// Leapfrog produced a non-finite gradient.
class DivergenceError : public NumericalError {
 public:
  explicit DivergenceError(int step)
      : NumericalError("leapfrog diverged at step " + std::to_string(step)), step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

inline void require_dim(const char* context, long expected, long actual) {
  if (expected != actual) throw DimensionError(context, expected, actual);
}

}  // namespace fastbkmr
