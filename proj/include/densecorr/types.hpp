#pragma once

#include <compare>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace densecorr {

/// Grid cell index. Axis convention everywhere: (row, col) <-> (y, x).
struct Cell {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Continuous position in input-pixel coordinates.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Raised when a function's documented precondition does not hold.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace densecorr
