#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <type_traits>

namespace rcdiff {

/// Round-trippable decimal form: 17 significant digits.
inline std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Writes comma-separated rows with LF endings.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  CsvWriter& header(const std::string& columns) {
    out_ << columns << '\n';
    return *this;
  }

  template <class... Ts>
  CsvWriter& row(const Ts&... values) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(values), first = false), ...);
    out_ << '\n';
    return *this;
  }

 private:
  static std::string cell(double v) { return format_real(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <class T>
  static std::string cell(const T& v) requires std::is_integral_v<T> {
    return std::to_string(v);
  }

  std::ostream& out_;
};

}  // namespace rcdiff
