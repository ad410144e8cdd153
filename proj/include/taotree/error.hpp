#pragma once

#include <stdexcept>
#include <string>

namespace taotree {

// Base for every error the library reports. The CLI maps the concrete type to
// an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: dimension mismatches, bad files, out-of-range arguments.
class InputError : public Error {
 public:
  using Error::Error;
};

// File-format violation at a known byte offset.
class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : InputError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// A mask recipe cannot be realized on the given tree.
class InfeasibleMaskError : public Error {
 public:
  using Error::Error;
};

// A mask was built but fails its own guarantee check.
class VerificationError : public Error {
 public:
  using Error::Error;
};

}  // namespace taotree
