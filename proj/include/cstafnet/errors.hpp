#pragma once

#include <stdexcept>
#include <string>

namespace cstafnet {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Dimension disagreement between operands.
class ShapeError : public Error {
public:
  using Error::Error;
};

// Inconsistent or out-of-range configuration value.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Malformed input file (CSV, dataset).
class ParseError : public Error {
public:
  using Error::Error;
};

class PreprocessError : public Error {
public:
  using Error::Error;
};

class SplitError : public Error {
public:
  using Error::Error;
};

class LabelError : public Error {
public:
  using Error::Error;
};

class CheckpointError : public Error {
public:
  using Error::Error;
};

// Non-finite value where a finite one is required.
class NumericError : public Error {
public:
  using Error::Error;
};

class DivergenceError : public NumericError {
public:
  using NumericError::NumericError;
};

}  // namespace cstafnet
