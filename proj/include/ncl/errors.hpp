#pragma once

#include <stdexcept>
#include <string>

namespace ncl {

// Each error kind maps onto one CLI exit code (see tools/ncl.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Zero-norm vectors handed to cosine-based code.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset or weights container: bad magic, truncation, checksum.
class DataError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace ncl
