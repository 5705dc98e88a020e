#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "mqa/geometry.hpp"

namespace mqa::actions {

inline constexpr int kImageSize = 224;
inline constexpr int kBinStride = 8;                     // action sampling step in pixels
inline constexpr int kPositionBins = kImageSize / kBinStride;  // 28
inline constexpr int kDirections = 8;
inline constexpr int kStopClass = kDirections;           // 9th class of the direction head
inline constexpr int kDirectionClasses = kDirections + 1;
inline constexpr int kPushDistance = kImageSize / 4;     // 56

struct Vec2 {
  double dx{};
  double dy{};
};

struct Offset {
  int dx{};
  int dy{};
  constexpr bool operator==(const Offset&) const = default;
};

/// Continuous push: start pixel, one of 8 canonical directions, fixed distance.
struct PushAction {
  Point start;
  int direction_class{};
  static constexpr int distance = kPushDistance;

  bool operator==(const PushAction&) const = default;
};

/// Decoupled action: x bin, y bin and direction class, with class 8 meaning STOP.
struct DiscreteAction {
  int x_bin{};
  int y_bin{};
  int o_class{};

  constexpr bool is_stop() const { return o_class == kStopClass; }
  static constexpr DiscreteAction stop() { return {0, 0, kStopClass}; }
  constexpr bool operator==(const DiscreteAction&) const = default;
};

inline bool is_valid(const DiscreteAction& a) {
  return a.x_bin >= 0 && a.x_bin < kPositionBins && a.y_bin >= 0 && a.y_bin < kPositionBins &&
         a.o_class >= 0 && a.o_class <= kStopClass;
}

/// Unit vector for direction class o: angle o*45 degrees from +x, turning toward +y (image down).
inline Vec2 direction_vector(int o_class) {
  if (o_class < 0 || o_class >= kDirections)
    throw std::out_of_range("direction class out of range: " + std::to_string(o_class));
  constexpr double h = 0.70710678118654752440;  // sqrt(2)/2
  static constexpr std::array<Vec2, kDirections> table{{
      {1.0, 0.0}, {h, h}, {0.0, 1.0}, {-h, h}, {-1.0, 0.0}, {-h, -h}, {0.0, -1.0}, {h, -h}}};
  return table[static_cast<std::size_t>(o_class)];
}

/// Whole-pixel displacement of a push: 56 px on the axes, 40 px per axis on diagonals.
inline Offset push_offset(int o_class) {
  const Vec2 v = direction_vector(o_class);
  return {static_cast<int>(std::lround(v.dx * kPushDistance)),
          static_cast<int>(std::lround(v.dy * kPushDistance))};
}

inline DiscreteAction discretize(double px, double py, double angle_deg) {
  if (!(px >= 0.0 && px < kImageSize && py >= 0.0 && py < kImageSize))
    throw std::out_of_range("discretize: push start outside the image");
  const double steps = angle_deg / 45.0;
  const double rounded = std::round(steps);
  if (std::abs(steps - rounded) > 1e-9)
    throw std::invalid_argument("discretize: angle is not a multiple of 45 degrees");
  const int o = ((static_cast<int>(rounded) % kDirections) + kDirections) % kDirections;
  return {static_cast<int>(std::floor(px / kBinStride)), static_cast<int>(std::floor(py / kBinStride)),
          o};
}

inline DiscreteAction discretize(const PushAction& push) {
  return discretize(push.start.x, push.start.y, 45.0 * push.direction_class);
}

/// Decodes to the bin center; nullopt stands for STOP.
inline std::optional<PushAction> continuize(const DiscreteAction& a) {
  if (a.is_stop()) return std::nullopt;
  if (!is_valid(a)) throw std::out_of_range("continuize: invalid discrete action");
  return PushAction{{static_cast<double>(kBinStride * a.x_bin + kBinStride / 2),
                     static_cast<double>(kBinStride * a.y_bin + kBinStride / 2)},
                    a.o_class};
}

/// Snaps a continuous push to the action grid (bin center, same direction).
inline PushAction snap(const PushAction& push) { return *continuize(discretize(push)); }

/// Unsigned angle between two direction classes, in degrees [0, 180].
inline double angle_between(int o_a, int o_b) {
  const int diff = ((o_a - o_b) % kDirections + kDirections) % kDirections;
  return 45.0 * std::min(diff, kDirections - diff);
}

}  // namespace mqa::actions
