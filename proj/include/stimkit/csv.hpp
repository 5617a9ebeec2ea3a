#pragma once
// Minimal CSV IO for the flat numeric tables this pipeline exchanges.
// No quoting or embedded separators — identifiers here never contain commas.
// All parse failures throw DataError naming file, line and column.

#include <fstream>
#include <string>
#include <vector>

#include "stimkit/common.hpp"

namespace stimkit {

class CsvReader {
 public:
  explicit CsvReader(const std::string& path);

  const std::vector<std::string>& header() const { return header_; }
  const std::string& path() const { return path_; }
  int line() const { return line_; }

  // Indices of required columns, in the order given; throws DataError naming
  // the first missing column.
  std::vector<size_t> require_columns(const std::vector<std::string>& names) const;

  // Reads the next data row into `fields`; false at EOF. Ragged rows throw.
  bool next(std::vector<std::string>& fields);

  // Typed accessors with file/line/column error context. `col` is 0-based.
  double as_double(const std::vector<std::string>& fields, size_t col) const;
  long as_long(const std::vector<std::string>& fields, size_t col) const;
  int64_t as_date(const std::vector<std::string>& fields, size_t col) const;

  // True when the field should be treated as a missing value.
  static bool is_missing(const std::string& s);

  [[noreturn]] void fail(size_t col, const std::string& what) const;

 private:
  void split(const std::string& s, std::vector<std::string>& out) const;

  std::string path_;
  std::ifstream in_;
  std::vector<std::string> header_;
  int line_ = 0;
};

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);

  void row(const std::vector<std::string>& fields);

  // Shortest round-trip decimal form; deterministic across platforms.
  static std::string num(double v);
  static std::string num(long long v);

 private:
  std::ofstream out_;
  size_t n_cols_;
  std::string path_;
};

}  // namespace stimkit
