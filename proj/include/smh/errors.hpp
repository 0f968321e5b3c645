#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace smh {

enum class ErrorCode : std::uint8_t {
  InvalidParameter = 1,
  InvalidInput = 2,
  DimensionMismatch = 3,
  ProtocolViolation = 4,
  OracleUnavailable = 5,
  EncodingError = 6,
  DecodeError = 7,
  TransportClosed = 8,
  IoError = 9,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Base for every error raised by the library; carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class InvalidParameter : public Error {
 public:
  explicit InvalidParameter(const std::string& what) : Error(ErrorCode::InvalidParameter, what) {}
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error(ErrorCode::InvalidInput, what) {}
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& what) : Error(ErrorCode::DimensionMismatch, what) {}
};

class ProtocolViolation : public Error {
 public:
  explicit ProtocolViolation(const std::string& what) : Error(ErrorCode::ProtocolViolation, what) {}
};

class OracleUnavailable : public Error {
 public:
  explicit OracleUnavailable(const std::string& what) : Error(ErrorCode::OracleUnavailable, what) {}
};

class EncodingError : public Error {
 public:
  explicit EncodingError(const std::string& what) : Error(ErrorCode::EncodingError, what) {}
};

class TransportClosed : public Error {
 public:
  explicit TransportClosed(const std::string& what) : Error(ErrorCode::TransportClosed, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::IoError, what) {}
};

/// Throws the Error subclass matching `code`.
[[noreturn]] void throw_error(ErrorCode code, const std::string& what);

}  // namespace smh
