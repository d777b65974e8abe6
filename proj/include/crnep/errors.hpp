#ifndef CRNEP_ERRORS_HPP
#define CRNEP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace crnep {

// Bad input: malformed model, dimension mismatch, out-of-range argument.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Integration produced a non-finite value, EP diverged, a matrix was singular.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace crnep

#endif  // CRNEP_ERRORS_HPP
