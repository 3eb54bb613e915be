#pragma once

#include <stdexcept>
#include <string>

namespace rdas {

/// Malformed or inconsistent input data (files, vocabularies, question sets).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A question with no entity surface form that can be linked to the KB.
class UnlinkableQuestion : public DataError {
 public:
  using DataError::DataError;
};

/// Invalid arguments or configuration supplied by the caller.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes passed to an op.
class ShapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Training diverged (NaN/inf loss) or a numeric precondition failed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rdas
