#include "fwm/format.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace fwm {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return {buf, res.ptr};
}

std::string format_fixed(double value, int decimals) {
  if (decimals < 0) throw std::invalid_argument("decimals must be >= 0");
  if (!std::isfinite(value)) return format_double(value);
  char buf[400];
  const auto res = std::to_chars(buf, buf + sizeof buf, std::abs(value), std::chars_format::fixed);
  std::string s(buf, res.ptr);
  std::size_t dot = s.find('.');
  if (dot == std::string::npos) {
    dot = s.size();
    s += '.';
  }
  s.append(static_cast<std::size_t>(decimals) + 1, '0');
  const bool round_up = s[dot + static_cast<std::size_t>(decimals) + 1] >= '5';
  s.resize(dot + static_cast<std::size_t>(decimals) + 1);
  if (round_up) {
    std::size_t i = s.size();
    bool carry = true;
    while (carry && i > 0) {
      --i;
      if (s[i] == '.') continue;
      if (s[i] == '9') {
        s[i] = '0';
      } else {
        ++s[i];
        carry = false;
      }
    }
    if (carry) s.insert(s.begin(), '1');
  }
  if (decimals == 0) s.pop_back();
  const bool zero = s.find_first_not_of("0.") == std::string::npos;
  return (value < 0 && !zero ? "-" : "") + s;
}

}  // namespace fwm
