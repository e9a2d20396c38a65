#pragma once

#include <stdexcept>
#include <string>

namespace dpvqa {

/// Shapes of operands are incompatible for the requested operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition was violated (empty input, out-of-range step, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Token or label index outside the vocabulary.
class VocabularyError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Malformed or unreadable file (feature volumes, checkpoints, corpora, configs).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dpvqa
