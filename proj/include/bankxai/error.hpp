#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bankxai {

enum class ErrorKind {
  kParse,        // malformed document (carries a byte offset when known)
  kMissingField, // mandatory field absent (carries a field path)
  kValidation,   // well-formed but violates an invariant
  kConflict,     // duplicate / conflicting identity
  kNotFound,
  kConfig,
  kSchema,
  kIo,
};

inline std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse_error";
    case ErrorKind::kMissingField: return "missing_field";
    case ErrorKind::kValidation: return "validation_error";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kConfig: return "config_error";
    case ErrorKind::kSchema: return "schema_error";
    case ErrorKind::kIo: return "io_error";
  }
  return "error";
}

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
  ParseError(const std::string& message, std::size_t byte_offset)
      : Error(ErrorKind::kParse, message + " at byte " + std::to_string(byte_offset)),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class FieldError : public Error {
 public:
  explicit FieldError(const std::string& field_path)
      : Error(ErrorKind::kMissingField, "missing field " + field_path),
        field_path_(field_path) {}

  const std::string& field_path() const noexcept { return field_path_; }

 private:
  std::string field_path_;
};

// A CSV row that could not be converted. Row numbers are 1-based and count
// the header line, so they match what a spreadsheet shows.
class RowError : public Error {
 public:
  RowError(std::size_t row, const std::string& message)
      : Error(ErrorKind::kValidation, "row " + std::to_string(row) + ": " + message),
        row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace bankxai
