#pragma once

#include <stdexcept>
#include <string>

namespace txst {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or dimensions do not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Zero-norm vectors, degenerate directions, empty batches.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class PromptTooLong : public Error {
 public:
  PromptTooLong(std::size_t tokens, std::size_t limit)
      : Error("prompt needs " + std::to_string(tokens) + " tokens but the context length is " +
              std::to_string(limit)),
        tokens_(tokens),
        limit_(limit) {}

  std::size_t tokens() const { return tokens_; }
  std::size_t limit() const { return limit_; }

 private:
  std::size_t tokens_;
  std::size_t limit_;
};

/// An image file could not be read or decoded.
class CorruptImage : public Error {
 public:
  explicit CorruptImage(const std::string& path) : Error("cannot decode image: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// A loss term evaluated to NaN or infinity.
class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(std::string term) : Error("loss term '" + term + "' is not finite"), term_(std::move(term)) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

}  // namespace txst
