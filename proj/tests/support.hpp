#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mqa/world.hpp"

namespace mqa::support {

/// Deterministic stream for hand-rolled property generators.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin() { return integer(0, 1) == 1; }
  std::uint64_t raw() { return rng_(); }

  Box box(int max_side = 80, int bound = world::kBinSize) {
    const int w = integer(1, max_side);
    const int h = integer(1, max_side);
    const int x = integer(0, bound - w);
    const int y = integer(0, bound - h);
    return {x, y, x + w, y + h};
  }

  actions::PushAction push() {
    return {{static_cast<double>(integer(0, world::kBinSize - 1)),
             static_cast<double>(integer(0, world::kBinSize - 1))},
            integer(0, actions::kDirections - 1)};
  }

 private:
  std::mt19937_64 rng_;
};

inline world::ObjectInstance object(int class_id, int instance_id, Box box, int z) {
  return {class_id * world::kInstancesPerClass + instance_id, class_id, instance_id, box, z};
}

inline world::Scene scene_of(std::vector<world::ObjectInstance> objects) {
  world::Scene s;
  s.objects = std::move(objects);
  return s;
}

/// Pixel-by-pixel visible area, independent of world::Raster.
inline long brute_visible_pixels(const world::Scene& s, std::size_t i) {
  const auto& o = s.objects[i];
  long n = 0;
  for (int y = o.box.y_min; y < o.box.y_max; ++y) {
    for (int x = o.box.x_min; x < o.box.x_max; ++x) {
      bool covered = false;
      for (const auto& other : s.objects)
        if (other.z > o.z && x >= other.box.x_min && x < other.box.x_max && y >= other.box.y_min &&
            y < other.box.y_max)
          covered = true;
      n += !covered;
    }
  }
  return n;
}

}  // namespace mqa::support
