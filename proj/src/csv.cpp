#include "stimkit/csv.hpp"

#include <charconv>
#include <cstdlib>

namespace stimkit {

CsvReader::CsvReader(const std::string& path) : path_(path), in_(path) {
  if (!in_) throw DataError("cannot open " + path);
  std::string first;
  if (!std::getline(in_, first)) throw DataError(path + ": empty file (no header)");
  if (!first.empty() && first.back() == '\r') first.pop_back();
  line_ = 1;
  split(first, header_);
  if (header_.empty()) throw DataError(path + ": empty header row");
}

void CsvReader::split(const std::string& s, std::vector<std::string>& out) const {
  out.clear();
  size_t start = 0;
  while (true) {
    const size_t pos = s.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<size_t> CsvReader::require_columns(const std::vector<std::string>& names) const {
  std::vector<size_t> idx;
  idx.reserve(names.size());
  for (const auto& name : names) {
    size_t found = header_.size();
    for (size_t i = 0; i < header_.size(); ++i) {
      if (header_[i] == name) {
        found = i;
        break;
      }
    }
    if (found == header_.size())
      throw DataError(path_ + ": missing required column '" + name + "'");
    idx.push_back(found);
  }
  return idx;
}

bool CsvReader::next(std::vector<std::string>& fields) {
  std::string row;
  while (std::getline(in_, row)) {
    ++line_;
    if (!row.empty() && row.back() == '\r') row.pop_back();
    if (row.empty()) continue;  // tolerate blank lines
    split(row, fields);
    if (fields.size() != header_.size())
      throw DataError(path_ + ":" + std::to_string(line_) + ": expected " +
                      std::to_string(header_.size()) + " fields, got " +
                      std::to_string(fields.size()));
    return true;
  }
  return false;
}

void CsvReader::fail(size_t col, const std::string& what) const {
  const std::string name = col < header_.size() ? header_[col] : "?";
  throw DataError(path_ + ":" + std::to_string(line_) + ": column '" + name + "': " + what);
}

bool CsvReader::is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan";
}

double CsvReader::as_double(const std::vector<std::string>& fields, size_t col) const {
  const std::string& s = fields[col];
  double v = 0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) fail(col, "not a number: '" + s + "'");
  return v;
}

long CsvReader::as_long(const std::vector<std::string>& fields, size_t col) const {
  const std::string& s = fields[col];
  long v = 0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) fail(col, "not an integer: '" + s + "'");
  return v;
}

int64_t CsvReader::as_date(const std::vector<std::string>& fields, size_t col) const {
  try {
    return parse_date(fields[col]);
  } catch (const DataError& e) {
    fail(col, e.what());
  }
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path), n_cols_(header.size()), path_(path) {
  if (!out_) throw DataError("cannot write " + path);
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) out_ << ',';
    out_ << header[i];
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != n_cols_)
    throw DataError(path_ + ": row with " + std::to_string(fields.size()) +
                    " fields, header has " + std::to_string(n_cols_));
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
}

std::string CsvWriter::num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string CsvWriter::num(long long v) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace stimkit
