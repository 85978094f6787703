#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lktseq {

enum class ErrorKind {
  kInvalidArgument,
  kIo,
  kSchema,      // a mapped column is missing
  kRow,         // a row could not be parsed
  kValidation,  // well-formed rows that violate a dataset invariant
  kParse,       // model formula grammar
  kSingular,    // collinear design columns
  kFit,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Formula error; `offset` is the 0-based character position in the input.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& message)
      : Error(ErrorKind::kParse,
              "at offset " + std::to_string(offset) + ": " + message),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Row error; `row` is the 1-based line number in the input file.
class RowError : public Error {
 public:
  RowError(std::size_t row, const std::string& message)
      : Error(ErrorKind::kRow, "row " + std::to_string(row) + ": " + message),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class SingularError : public Error {
 public:
  explicit SingularError(std::vector<std::string> columns)
      : Error(ErrorKind::kSingular, Describe(columns)),
        columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  static std::string Describe(const std::vector<std::string>& columns) {
    std::string s = "singular design; collinear columns:";
    for (const auto& c : columns) s += " [" + c + "]";
    return s;
  }
  std::vector<std::string> columns_;
};

}  // namespace lktseq
