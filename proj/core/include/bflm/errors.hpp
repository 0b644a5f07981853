#pragma once

#include <stdexcept>
#include <string>

namespace bflm {

// Broken precondition or shape mismatch on an API call.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Malformed or inconsistent user-supplied data (corpus, vocab, checkpoint).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf surfaced where finite math was required; carries the offending name.
class NumericFault : public std::runtime_error {
 public:
  explicit NumericFault(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bflm
