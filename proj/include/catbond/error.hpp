#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace catbond {

// Bad input data or parameters. The CLI maps this to exit code 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A CSV cell or structural problem, located by 1-based data row and column name.
class ParseError : public DataError {
 public:
  ParseError(std::size_t row, std::string column, const std::string& what)
      : DataError("row " + std::to_string(row) + ", column '" + column + "': " + what),
        row_(row),
        column_(std::move(column)) {}

  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

class EmptyDatasetError : public DataError {
 public:
  EmptyDatasetError() : DataError("dataset has no records") {}
};

class SchemaMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class RankDeficientError : public DataError {
 public:
  using DataError::DataError;
};

// Filesystem problems. Exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A violated internal invariant. Exit code 3.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace catbond
