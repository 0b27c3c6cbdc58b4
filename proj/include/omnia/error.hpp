#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace omnia {

// Every failure raised by the library carries one of these kinds; the CLI
// reports it verbatim in its error JSON.
enum class ErrorKind {
  Parse,
  Referential,
  Geometry,
  Schema,
  Config,
  Io,
  Precondition,
  Numeric,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : Error(ErrorKind::Parse, message + " (line " + std::to_string(line) +
                                    ", column " + std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace omnia
