#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace minipipe {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::uint64_t bytes_written)
      : Error(what), bytes_written_(bytes_written) {}
  std::uint64_t bytes_written() const noexcept { return bytes_written_; }

 private:
  std::uint64_t bytes_written_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Payload ended before a column was complete.
class LengthError : public Error {
 public:
  LengthError(const std::string& what, std::size_t column)
      : Error(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

/// Operator failure attributed to a row (and column when known).
class OperatorError : public Error {
 public:
  static constexpr std::size_t kNoColumn = static_cast<std::size_t>(-1);

  OperatorError(const std::string& what, std::uint64_t row,
                std::size_t column = kNoColumn)
      : Error(what), row_(row), column_(column) {}
  std::uint64_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::uint64_t row_;
  std::size_t column_;
};

class DomainError : public OperatorError {
 public:
  using OperatorError::OperatorError;
};

class ParseError : public OperatorError {
 public:
  ParseError(const std::string& what, std::uint64_t row, std::size_t position,
             std::size_t column = kNoColumn)
      : OperatorError(what, row, column), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class RangeError : public OperatorError {
 public:
  using OperatorError::OperatorError;
};

class UnknownValueError : public OperatorError {
 public:
  UnknownValueError(const std::string& what, std::uint64_t value,
                    std::uint64_t row, std::size_t column = kNoColumn)
      : OperatorError(what, row, column), value_(value) {}
  std::uint64_t value() const noexcept { return value_; }

 private:
  std::uint64_t value_;
};

class ParamError : public Error {
 public:
  using Error::Error;
};

/// Pipeline description could not be compiled.
class SpecError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Requested behaviour the source or slot cannot provide (e.g. a second pass).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class SchedulingError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public Error {
 public:
  using Error::Error;
};

/// Server refused a session because every slot is taken. Retrying later may succeed.
class BusyError : public Error {
 public:
  using Error::Error;
};

/// Job stopped at a frame boundary by a reconfiguration or shutdown.
class PreemptedError : public Error {
 public:
  using Error::Error;
};

}  // namespace minipipe
