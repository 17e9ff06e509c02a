#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>

/** @file spadsim/units.hpp
    @brief SI quantity parsing ("921 MHz", "154 ps", "9.3 %") and exact round-trip formatting.
*/

namespace spadsim
{
  inline constexpr double ns = 1e-9;
  inline constexpr double ps = 1e-12;
  inline constexpr double MHz = 1e6;

  enum class Dimension { frequency, time, voltage, dimensionless };

  inline const char* base_unit(Dimension d)
  {
    switch (d)
    {
      case Dimension::frequency: return "Hz";
      case Dimension::time: return "s";
      case Dimension::voltage: return "V";
      default: return "";
    }
  }

  namespace detail
  {
    inline std::string_view trim(std::string_view s)
    {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
      return s;
    }

    // returns the decimal exponent of an SI prefix, or 99 when unknown
    inline int prefix_exponent(std::string_view p)
    {
      if (p.empty()) return 0;
      if (p == "T") return 12;
      if (p == "G") return 9;
      if (p == "M") return 6;
      if (p == "k") return 3;
      if (p == "m") return -3;
      if (p == "u" || p == "\xC2\xB5" || p == "\xCE\xBC") return -6;
      if (p == "n") return -9;
      if (p == "p") return -12;
      if (p == "f") return -15;
      return 99;
    }
  }

  /** @brief Parses a number with an optional SI-prefixed unit suffix and returns it in base units.

      The mantissa and the prefix exponent are combined textually before conversion, so
      "154 ps" yields the correctly rounded double nearest to 1.54e-10.
  */
  inline double parse_quantity(std::string_view text, Dimension dim)
  {
    const auto s = detail::trim(text);
    std::size_t split = 0;
    while (split < s.size())
    {
      const char c = s[split];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '+' || c == '-')
      {
        ++split;
        continue;
      }
      // exponent marker only when followed by a digit or sign
      if ((c == 'e' || c == 'E') && split + 1 < s.size() &&
          (std::isdigit(static_cast<unsigned char>(s[split + 1])) || s[split + 1] == '-' || s[split + 1] == '+'))
      {
        split += 2;
        continue;
      }
      break;
    }
    const std::string mantissa(s.substr(0, split));
    const auto unit = detail::trim(s.substr(split));
    if (mantissa.empty()) throw std::invalid_argument("quantity '" + std::string(text) + "' has no numeric value");

    int exponent = 0;
    if (dim == Dimension::dimensionless)
    {
      if (unit == "%") exponent = -2;
      else if (!unit.empty()) throw std::invalid_argument("quantity '" + std::string(text) + "' must be dimensionless");
    }
    else if (!unit.empty())
    {
      const std::string_view base = base_unit(dim);
      if (unit.size() < base.size() || unit.substr(unit.size() - base.size()) != base)
        throw std::invalid_argument("quantity '" + std::string(text) + "' expects unit " + std::string(base));
      exponent = detail::prefix_exponent(unit.substr(0, unit.size() - base.size()));
      if (exponent == 99) throw std::invalid_argument("unknown SI prefix in '" + std::string(text) + "'");
    }

    std::string literal = mantissa;
    if (exponent != 0)
    {
      // fold the prefix into an existing exponent if there is one
      const auto epos = literal.find_first_of("eE");
      if (epos == std::string::npos) literal += "e" + std::to_string(exponent);
      else literal = literal.substr(0, epos) + "e" + std::to_string(std::stoi(literal.substr(epos + 1)) + exponent);
    }
    char* end = nullptr;
    const double value = std::strtod(literal.c_str(), &end);
    if (end != literal.c_str() + literal.size() || !std::isfinite(value))
      throw std::invalid_argument("malformed quantity '" + std::string(text) + "'");
    return value;
  }

  /// Shortest decimal text that parses back to exactly @p value.
  inline std::string format_exact(double value)
  {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
  }

  inline std::string format_quantity(double value, Dimension dim)
  {
    std::string out = format_exact(value);
    if (dim != Dimension::dimensionless) out += std::string(" ") + base_unit(dim);
    return out;
  }
}
