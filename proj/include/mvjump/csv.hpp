#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

namespace mvjump::csv {

// Shortest round-trip decimal form.
inline std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split(std::string_view line, char sep = ',');
double parse_double(std::string_view field);

}  // namespace mvjump::csv
