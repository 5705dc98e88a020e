#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mqa {

/// Axis-aligned rectangle, half-open in pixel space: [x_min, x_max) x [y_min, y_max).
template <typename T>
struct BasicBox {
  T x_min{};
  T y_min{};
  T x_max{};
  T y_max{};

  constexpr T width() const { return x_max - x_min; }
  constexpr T height() const { return y_max - y_min; }
  constexpr bool operator==(const BasicBox&) const = default;
};

using Box = BasicBox<int>;
using BoxF = BasicBox<double>;

struct Point {
  double x{};
  double y{};
  constexpr bool operator==(const Point&) const = default;
};

template <typename T>
constexpr bool is_degenerate(const BasicBox<T>& b) {
  return !(b.x_min < b.x_max && b.y_min < b.y_max);
}

template <typename T>
constexpr double area(const BasicBox<T>& b) {
  return is_degenerate(b) ? 0.0 : static_cast<double>(b.width()) * static_cast<double>(b.height());
}

template <typename T>
constexpr double intersection_area(const BasicBox<T>& a, const BasicBox<T>& b) {
  const T w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const T h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= T{} || h <= T{}) return 0.0;
  return static_cast<double>(w) * static_cast<double>(h);
}

/// True when the two boxes share a region of positive area (touching edges do not count).
template <typename T>
constexpr bool overlaps(const BasicBox<T>& a, const BasicBox<T>& b) {
  return intersection_area(a, b) > 0.0;
}

template <typename T>
constexpr Point center(const BasicBox<T>& b) {
  return {(static_cast<double>(b.x_min) + static_cast<double>(b.x_max)) / 2.0,
          (static_cast<double>(b.y_min) + static_cast<double>(b.y_max)) / 2.0};
}

template <typename T>
double diagonal(const BasicBox<T>& b) {
  return std::hypot(static_cast<double>(b.width()), static_cast<double>(b.height()));
}

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Overlap rate: intersection area over union area.
template <typename T>
double iou(const BasicBox<T>& a, const BasicBox<T>& b) {
  if (is_degenerate(a) || is_degenerate(b)) throw std::invalid_argument("iou: degenerate box");
  const double inter = intersection_area(a, b);
  return inter / (area(a) + area(b) - inter);
}

/// Center distance normalised by the longer of the two box diagonals.
template <typename T>
double norm_distance(const BasicBox<T>& a, const BasicBox<T>& b) {
  if (is_degenerate(a) || is_degenerate(b))
    throw std::invalid_argument("norm_distance: degenerate box");
  return distance(center(a), center(b)) / std::max(diagonal(a), diagonal(b));
}

}  // namespace mqa
