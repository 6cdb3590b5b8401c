#pragma once

#include <string>

#include <boost/multiprecision/cpp_int.hpp>

#include "symperm/common.hpp"

namespace symperm {

/// Exact arbitrary-precision rational; all order comparisons in the
/// monotone machinery are exact.
using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline std::string rational_to_string(const Rational& q) {
  std::string s = numerator(q).str();
  if (denominator(q) != 1) s += "/" + denominator(q).str();
  return s;
}

/// Parses "p", "-p", "p/q" (q > 0 after normalization).
inline Rational parse_rational(const std::string& s) {
  auto slash = s.find('/');
  try {
    if (slash == std::string::npos) return Rational(BigInt(s));
    BigInt num(s.substr(0, slash));
    BigInt den(s.substr(slash + 1));
    if (den == 0)
      throw SymError(ErrorCode::ParseError, "zero denominator in " + s);
    return Rational(num, den);
  } catch (const SymError&) {
    throw;
  } catch (const std::exception&) {
    throw SymError(ErrorCode::ParseError, "bad rational: " + s);
  }
}

} // namespace symperm
