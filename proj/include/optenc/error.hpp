#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace optenc {

/// Base of every error thrown by the library. `kind()` is a stable
/// machine-readable tag used by the CLI for its one-line error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define OPTENC_DEFINE_ERROR(Name)                                             \
  class Name : public Error {                                                 \
   public:                                                                    \
    explicit Name(const std::string& message) : Error(#Name, message) {}      \
  };

OPTENC_DEFINE_ERROR(TokenizeError)
OPTENC_DEFINE_ERROR(IoError)
OPTENC_DEFINE_ERROR(FormatError)
OPTENC_DEFINE_ERROR(VersionError)
OPTENC_DEFINE_ERROR(EmptyDataset)
OPTENC_DEFINE_ERROR(TooLong)
OPTENC_DEFINE_ERROR(SpanMismatch)
OPTENC_DEFINE_ERROR(PoolTooSmall)
OPTENC_DEFINE_ERROR(ShapeError)
OPTENC_DEFINE_ERROR(NonFiniteError)
OPTENC_DEFINE_ERROR(MissingLabel)
OPTENC_DEFINE_ERROR(ZeroVector)
OPTENC_DEFINE_ERROR(NoRelevant)
OPTENC_DEFINE_ERROR(ConfigError)

#undef OPTENC_DEFINE_ERROR

/// Raised when a token stream falls outside the supported grammar.
class ParseError : public Error {
 public:
  ParseError(std::size_t token_index, const std::string& message)
      : Error("ParseError", message + " (token " + std::to_string(token_index) + ")"),
        token_index_(token_index) {}
  std::size_t token_index() const noexcept { return token_index_; }

 private:
  std::size_t token_index_;
};

}  // namespace optenc
