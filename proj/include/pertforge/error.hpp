#pragma once

#include <stdexcept>
#include <string>

namespace pertforge {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: config, CLI arguments, malformed datasets. CLI exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Network or HTTP failure that survived the retry budget. CLI exit code 2.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Response arrived but its body does not match the expected wire shape.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// An optimization run aborted mid-way but left a usable checkpoint.
/// CLI exit code 3; the checkpoint path is printed for --resume.
class ResumableAbort : public Error {
 public:
  ResumableAbort(const std::string& what, std::string checkpoint_dir)
      : Error(what), checkpoint_dir(std::move(checkpoint_dir)) {}

  std::string checkpoint_dir;
};

}  // namespace pertforge
