#pragma once

#include <stdexcept>
#include <string>

namespace hnmt {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up.
struct DimensionError : Error {
  using Error::Error;
};

// A documented precondition was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

// Malformed or inconsistent input data (corpora, score files).
struct DataError : Error {
  using Error::Error;
};

// Token/id lookups outside a vocabulary.
struct VocabError : Error {
  using Error::Error;
};

// Inconsistent model/run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Unreadable or malformed on-disk artifacts (checkpoints, vocab files).
struct FormatError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace hnmt
