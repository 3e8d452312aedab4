#pragma once

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dstrain::csv {

/// Round-trip formatting, 17 significant digits.
inline std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Joins already-formatted cells with commas.
inline std::string row(std::initializer_list<std::string> cells) {
  std::string out;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) out += ',';
    out += c;
    first = false;
  }
  return out;
}

inline std::string row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out;
}

/// Line-oriented writer that flushes every row, so partial output of an
/// aborted run is still readable.
class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
  }
  void line(std::string_view s) {
    out_ << s << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace dstrain::csv
