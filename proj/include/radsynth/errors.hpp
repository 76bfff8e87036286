#pragma once

#include <stdexcept>
#include <string>

namespace radsynth {

// Invalid arguments, shapes or ranges supplied by the caller.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or negative radicands during numerical work.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation invoked in the wrong lifecycle state (e.g. scoring an unfinished session).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Response submitted for an item that is not the current one.
class SequenceError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Duplicate submission.
class ConflictError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace radsynth
