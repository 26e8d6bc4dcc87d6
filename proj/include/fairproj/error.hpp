#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fairproj {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: files, schemas, column layouts, out-of-range parameters.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not produce a meaningful result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Location of a problem in a CSV file. Rows are 1-based data rows (the
/// header is row 0).
struct CellLocation {
  std::size_t row = 0;
  std::string column;
};

class CsvError : public DataError {
 public:
  CsvError(const std::string& what, CellLocation where)
      : DataError(what), where_(std::move(where)) {}
  const CellLocation& where() const noexcept { return where_; }

 private:
  CellLocation where_;
};

class MissingColumnError : public CsvError {
 public:
  explicit MissingColumnError(const std::string& column)
      : CsvError("column '" + column + "' named in schema is missing from header",
                 {0, column}) {}
};

class DuplicateHeaderError : public CsvError {
 public:
  explicit DuplicateHeaderError(const std::string& column)
      : CsvError("duplicate header '" + column + "'", {0, column}) {}
};

class NonNumericCellError : public CsvError {
 public:
  NonNumericCellError(std::size_t row, const std::string& column, const std::string& text)
      : CsvError("non-numeric value '" + text + "' at row " + std::to_string(row) +
                     ", column '" + column + "'",
                 {row, column}) {}
};

class NonFiniteCellError : public CsvError {
 public:
  NonFiniteCellError(std::size_t row, const std::string& column, const std::string& text)
      : CsvError("non-finite value '" + text + "' at row " + std::to_string(row) +
                     ", column '" + column + "'",
                 {row, column}) {}
};

class RaggedRowError : public CsvError {
 public:
  RaggedRowError(std::size_t row, std::size_t got, std::size_t expected)
      : CsvError("row " + std::to_string(row) + " has " + std::to_string(got) +
                     " fields, header has " + std::to_string(expected),
                 {row, {}}) {}
};

/// The protected columns span nothing (every column degenerate).
class RankZeroBasisError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Least-squares design is rank deficient and no fallback was allowed.
class RankDeficientError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Correlation requested for a vector with zero variance.
class ZeroVarianceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace fairproj
