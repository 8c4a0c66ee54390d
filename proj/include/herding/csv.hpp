#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace herding::csv {

// Minimal RFC-4180 style reader: quoted fields, doubled quotes, CRLF and a
// leading UTF-8 BOM. Embedded newlines inside quotes are not supported.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Next non-blank record; false at end of input.
  bool next(std::vector<std::string>& fields);
  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

std::vector<std::string> split_line(std::string_view line);
std::string trim(std::string_view s);
std::string lower(std::string_view s);

// Strict full-string number parse; nullopt on garbage or empty.
std::optional<double> parse_double(std::string_view s);

// Shortest round-trip representation.
std::string format_double(double v);

}  // namespace herding::csv
