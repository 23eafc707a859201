#pragma once

#include <stdexcept>
#include <string>

namespace filmgrade {

// Base of every error the library throws. The CLI maps all of these to
// exit code 2 (data/format error).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller-supplied value violates an operation's precondition
// (mismatched dimensions, odd sizes, wrong channel count, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// A file was readable but its contents do not follow the expected format.
class FormatError : public Error {
 public:
  using Error::Error;
};

class MissingTensorError : public Error {
 public:
  explicit MissingTensorError(std::string name)
      : Error("missing tensor '" + name + "'"), name_(std::move(name)) {}
  const std::string& tensor_name() const noexcept { return name_; }

 private:
  std::string name_;
};

// Optimisation produced a NaN or infinite objective.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace filmgrade
