#pragma once

#include <charconv>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace aap {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input values outside the documented domain (degenerate or ill-posed data).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Shapes or schemas that must agree but do not.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed file content; message carries file/row/field context.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Training produced non-finite numbers.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Shortest decimal string that round-trips the exact double value.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string format_fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return std::string(buf);
}

}  // namespace aap
