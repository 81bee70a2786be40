#ifndef MIXEDSEG_ERRORS_HPP_
#define MIXEDSEG_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace mixedseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/layer dimension mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Inconsistent or infeasible configuration (bad model config, fold sizes, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing or malformed inputs: empty pools, absent masks, unreadable files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses or gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixedseg

#endif  // MIXEDSEG_ERRORS_HPP_
