#pragma once

#include <string>
#include <vector>

namespace specmask::io {

/// RFC-style quoting: fields containing comma, quote, CR or LF are wrapped in
/// double quotes, embedded quotes doubled.
std::string csv_quote(const std::string& field);

/// Accumulates CSV rows into a byte buffer (LF line endings).
class CsvWriter {
 public:
  void row(const std::vector<std::string>& fields);
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

}  // namespace specmask::io
