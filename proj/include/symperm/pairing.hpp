#pragma once

#include <cstdint>
#include <utility>

#include "symperm/common.hpp"

namespace symperm {

/// Integer square root, exact (no floating point drift at 64-bit scale).
inline std::uint64_t isqrt(std::uint64_t n) {
  if (n == 0) return 0;
  std::uint64_t x = n, y = (x + 1) / 2;
  while (y < x) {
    x = y;
    y = (x + n / x) / 2;
  }
  return x;
}

/// Cantor pairing <i,j> = (i+j)(i+j+1)/2 + j.
inline Point pair_encode(Point i, Point j) {
  Point s = i + j;
  return s * (s + 1) / 2 + j;
}

inline std::pair<Point, Point> pair_decode(Point n) {
  Point w = (isqrt(8 * n + 1) - 1) / 2;
  Point t = w * (w + 1) / 2;
  Point j = n - t;
  return {w - j, j};
}

/// Zig-zag bijection N <-> Z: 0, 1, -1, 2, -2, ...
inline std::int64_t zigzag_decode(Point n) {
  if (n % 2 == 0) return -static_cast<std::int64_t>(n / 2);
  return static_cast<std::int64_t>((n + 1) / 2);
}

inline Point zigzag_encode(std::int64_t z) {
  if (z > 0) return 2 * static_cast<Point>(z) - 1;
  return 2 * static_cast<Point>(-z);
}

} // namespace symperm
