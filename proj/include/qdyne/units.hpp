#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qdyne/constants.hpp"
#include "qdyne/errors.hpp"

// Boundary unit handling.  Internally everything is SI: seconds, rad,
// rad/s for drive/detuning frequencies.  Hyperfine couplings stay in plain
// Hz because the 2*pi is written explicitly in the coupling Hamiltonian.
namespace qdyne::units {

enum class Dimension { none, time, frequency, angular_frequency, angle };

inline bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}

// Scale factor for a unit suffix within the expected dimension;
// angular_frequency differs from frequency only by the folded-in 2*pi.
inline std::optional<double> unit_scale(std::string_view unit, Dimension dim) {
  using constants::two_pi;
  const double ang = dim == Dimension::angular_frequency ? two_pi : 1.0;
  switch (dim) {
    case Dimension::time:
      if (iequals(unit, "s")) return 1.0;
      if (iequals(unit, "ms")) return 1e-3;
      if (iequals(unit, "us")) return 1e-6;
      if (iequals(unit, "ns")) return 1e-9;
      return std::nullopt;
    case Dimension::frequency:
    case Dimension::angular_frequency:
      if (iequals(unit, "hz")) return ang;
      if (iequals(unit, "khz") || iequals(unit, "k")) return 1e3 * ang;
      if (iequals(unit, "mhz") || iequals(unit, "m")) return 1e6 * ang;
      return std::nullopt;
    case Dimension::angle:
      if (iequals(unit, "deg")) return constants::pi / 180.0;
      if (iequals(unit, "rad")) return 1.0;
      return std::nullopt;
    case Dimension::none:
      if (unit.empty()) return 1.0;
      return std::nullopt;
  }
  return std::nullopt;
}

// Parse "<number><unit>" for an expected dimension.  A bare number is taken
// as already being in the internal unit.
inline double parse_value(std::string_view tok, Dimension dim, int line = 0,
                          int col = 0) {
  double num = 0.0;
  size_t num_len = 0;
  for (size_t len = tok.size(); len > 0; --len) {
    double v;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + len, v);
    if (ec == std::errc() && p == tok.data() + len) {
      num = v;
      num_len = len;
      break;
    }
  }
  if (num_len == 0)
    throw ParseError("expected a number, got '" + std::string(tok) + "'", line,
                     col);
  std::string_view unit = tok.substr(num_len);
  if (unit.empty()) return num;
  auto scale = unit_scale(unit, dim);
  if (!scale)
    throw ParseError("unknown unit '" + std::string(unit) + "' in '" +
                         std::string(tok) + "'",
                     line, col);
  return num * *scale;
}

namespace detail {

// Distance, in representable steps of v, between v and what the numeral
// reparses to at this scale; anything beyond one step counts as far.
inline int reparse_ulps(const char* numeral, double scale, double v) {
  std::string_view s(numeral);
  double x;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size()) return 99;
  const double back = x * scale;
  if (back == v) return 0;
  if (back == std::nextafter(v, back) ) return 1;
  return 99;
}

// Decimal numeral for v/scale that reparses to v.  Prefers a bit-exact
// numeral; accepts one representable step of drift only when that makes the
// numeral substantially shorter (e.g. "10" us instead of 17 digits for a
// duration constructed as 1e-5 s).  Empty when nothing lands within one step.
inline std::string exact_numeral(double v, double scale) {
  const double x = v / scale;
  char buf[64];
  std::string exact, close;
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    const int ulps = reparse_ulps(buf, scale, v);
    if (ulps == 0 && (exact.empty() || std::strlen(buf) < exact.size())) exact = buf;
    if (ulps == 1 && (close.empty() || std::strlen(buf) < close.size())) close = buf;
  }
  // A one-step-off numeral is only worth it when it is genuinely short;
  // otherwise fall through so the caller can try the next (or base) unit,
  // which recovers the value bit-exactly.
  const bool close_is_pretty = !close.empty() && close.size() <= 12;
  if (exact.empty()) return close_is_pretty ? close : std::string{};
  if (close_is_pretty && close.size() + 2 <= exact.size()) return close;
  return exact;
}

struct UnitChoice {
  const char* name;
  double scale;
};

// Prefer the unit whose numeral lands in [1, 1000); among candidates that
// admit a bit-exact numeral, scan preferred-first.  The base unit (scale of
// the internal representation) always round-trips and terminates the scan.
inline std::string pick_unit(double v, const std::vector<UnitChoice>& units) {
  const double mag = std::abs(v);
  size_t pref = units.size() - 1;  // smallest scale by convention
  for (size_t i = 0; i + 1 < units.size(); ++i)
    if (mag >= units[i].scale) {
      pref = i;
      break;
    }
  for (size_t k = 0; k < units.size(); ++k) {
    size_t i = (pref + k) % units.size();
    std::string num = exact_numeral(v, units[i].scale);
    if (!num.empty()) return num + units[i].name;
  }
  char buf[80];
  std::snprintf(buf, sizeof buf, "%.17g%s", v / units.back().scale,
                units.back().name);
  return buf;
}

}  // namespace detail

// Format an internal value with the prettiest unit that round-trips through
// parse_value bit-exactly.
inline std::string format_value(double v, Dimension dim) {
  using constants::two_pi;
  using detail::pick_unit;
  switch (dim) {
    case Dimension::time:
      return pick_unit(v, {{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}});
    case Dimension::frequency:
      return pick_unit(v, {{"MHz", 1e6}, {"kHz", 1e3}, {"Hz", 1.0}});
    case Dimension::angular_frequency:
      return pick_unit(v, {{"MHz", 1e6 * two_pi},
                           {"kHz", 1e3 * two_pi},
                           {"Hz", two_pi},
                           {"", 1.0}});
    case Dimension::angle:
      return pick_unit(v, {{"deg", constants::pi / 180.0}, {"rad", 1.0}});
    case Dimension::none:
      return detail::exact_numeral(v, 1.0);
  }
  return {};
}

}  // namespace qdyne::units
