#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mqa/actions.hpp"
#include "mqa/geometry.hpp"

namespace mqa::world {

inline constexpr int kBinSize = 224;
inline constexpr int kNumClasses = 20;
inline constexpr int kInstancesPerClass = 3;
inline constexpr int kCatalogSize = kNumClasses * kInstancesPerClass;
inline constexpr int kMinSide = 20;
inline constexpr int kMaxSide = 60;
inline constexpr double kVisibilityThreshold = 0.25;
inline constexpr int kCorridorWidth = 16;

// Observation occupancy grid: one cell per 8x8 pixel action bin.
inline constexpr int kGridCells = kBinSize / actions::kBinStride;
inline constexpr int kGridCellPixels = actions::kBinStride;

struct ClassName {
  std::string_view singular;
  std::string_view plural;
};

inline constexpr std::array<ClassName, kNumClasses> kClassNames{{
    {"key", "keys"},           {"keyboard", "keyboards"}, {"pen", "pens"},
    {"notebook", "notebooks"}, {"clock", "clocks"},       {"scissors", "scissors"},
    {"bottle", "bottles"},     {"cup", "cups"},           {"book", "books"},
    {"phone", "phones"},       {"mouse", "mice"},         {"apple", "apples"},
    {"banana", "bananas"},     {"remote", "remotes"},     {"toothbrush", "toothbrushes"},
    {"spoon", "spoons"},       {"fork", "forks"},         {"knife", "knives"},
    {"marker", "markers"},     {"wallet", "wallets"},
}};

inline std::optional<int> class_from_name(std::string_view name) {
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& n = kClassNames[static_cast<std::size_t>(c)];
    if (n.singular == name || n.plural == name) return c;
  }
  return std::nullopt;
}

inline std::string_view class_name(int class_id) {
  if (class_id < 0 || class_id >= kNumClasses) throw std::out_of_range("class id out of range");
  return kClassNames[static_cast<std::size_t>(class_id)].singular;
}

enum class Difficulty { easy, hard };

inline int object_count(Difficulty d) { return d == Difficulty::easy ? 20 : 35; }

inline std::string_view to_string(Difficulty d) { return d == Difficulty::easy ? "easy" : "hard"; }

inline Difficulty difficulty_from_string(std::string_view s) {
  if (s == "easy") return Difficulty::easy;
  if (s == "hard") return Difficulty::hard;
  throw std::invalid_argument("unknown difficulty: " + std::string(s));
}

struct ObjectInstance {
  int id{};           // catalog id: class_id * 3 + instance_id
  int class_id{};
  int instance_id{};
  Box box;
  int z{};            // stacking rank, higher is on top

  bool operator==(const ObjectInstance&) const = default;
};

struct Scene {
  std::vector<ObjectInstance> objects;
  std::uint64_t seed{};
  Difficulty difficulty{Difficulty::easy};

  const ObjectInstance* find(int id) const {
    for (const auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
  std::size_t index_of(int id) const {
    for (std::size_t i = 0; i < objects.size(); ++i)
      if (objects[i].id == id) return i;
    throw std::out_of_range("unknown object id " + std::to_string(id));
  }

  bool operator==(const Scene&) const = default;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct ObjectSize {
  int width{};
  int height{};
};

/// Fixed footprint of each catalog instance, sides in [20, 60] px.
inline ObjectSize instance_size(int class_id, int instance_id) {
  if (class_id < 0 || class_id >= kNumClasses || instance_id < 0 ||
      instance_id >= kInstancesPerClass)
    throw std::out_of_range("catalog entry out of range");
  const std::uint64_t h =
      splitmix64(0x6D71615F73697A65ULL ^ static_cast<std::uint64_t>(class_id * kInstancesPerClass + instance_id));
  constexpr std::uint64_t span = kMaxSide - kMinSide + 1;
  return {kMinSide + static_cast<int>((h & 0xFFFFFFFFULL) % span),
          kMinSide + static_cast<int>((h >> 32) % span)};
}

/// Draws n distinct catalog instances and drops them into the bin in order; later drops lie on top.
inline Scene generate_scene(std::uint64_t seed, Difficulty difficulty) {
  std::mt19937_64 rng(splitmix64(seed) ^ (difficulty == Difficulty::easy ? 0x1ULL : 0x2ULL));
  std::array<int, kCatalogSize> catalog{};
  for (int i = 0; i < kCatalogSize; ++i) catalog[static_cast<std::size_t>(i)] = i;

  Scene scene;
  scene.seed = seed;
  scene.difficulty = difficulty;
  const int n = object_count(difficulty);
  scene.objects.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto pick = static_cast<std::size_t>(i) + rng() % static_cast<std::uint64_t>(kCatalogSize - i);
    std::swap(catalog[static_cast<std::size_t>(i)], catalog[pick]);
    const int entry = catalog[static_cast<std::size_t>(i)];
    const int cls = entry / kInstancesPerClass;
    const int inst = entry % kInstancesPerClass;
    const ObjectSize size = instance_size(cls, inst);
    const int x = static_cast<int>(rng() % static_cast<std::uint64_t>(kBinSize - size.width + 1));
    const int y = static_cast<int>(rng() % static_cast<std::uint64_t>(kBinSize - size.height + 1));
    scene.objects.push_back({entry, cls, inst, {x, y, x + size.width, y + size.height}, i});
  }
  return scene;
}

inline bool inside_bin(const Box& b) {
  return b.x_min >= 0 && b.y_min >= 0 && b.x_max <= kBinSize && b.y_max <= kBinSize &&
         !is_degenerate(b);
}

/// Per-pixel index of the topmost object, with per-object visible pixel counts and extents.
class Raster {
 public:
  explicit Raster(const Scene& scene)
      : top_(static_cast<std::size_t>(kBinSize * kBinSize), -1),
        visible_(scene.objects.size(), 0),
        extent_(scene.objects.size(),
                Box{kBinSize, kBinSize, 0, 0}) {
    std::vector<std::size_t> order(scene.objects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scene.objects[a].z < scene.objects[b].z;
    });
    for (std::size_t idx : order) {
      const Box b = clipped(scene.objects[idx].box);
      for (int y = b.y_min; y < b.y_max; ++y)
        for (int x = b.x_min; x < b.x_max; ++x) top_[pixel(x, y)] = static_cast<int>(idx);
    }
    for (int y = 0; y < kBinSize; ++y) {
      for (int x = 0; x < kBinSize; ++x) {
        const int t = top_[pixel(x, y)];
        if (t < 0) continue;
        const auto i = static_cast<std::size_t>(t);
        ++visible_[i];
        Box& e = extent_[i];
        e.x_min = std::min(e.x_min, x);
        e.y_min = std::min(e.y_min, y);
        e.x_max = std::max(e.x_max, x + 1);
        e.y_max = std::max(e.y_max, y + 1);
      }
    }
  }

  int top_index(int x, int y) const { return top_[pixel(x, y)]; }
  long visible_pixels(std::size_t index) const { return visible_.at(index); }
  /// Tight box of the unoccluded pixels; degenerate when nothing is visible.
  Box visible_box(std::size_t index) const {
    return visible_.at(index) > 0 ? extent_[index] : Box{};
  }

 private:
  static std::size_t pixel(int x, int y) { return static_cast<std::size_t>(y * kBinSize + x); }
  static Box clipped(const Box& b) {
    return {std::clamp(b.x_min, 0, kBinSize), std::clamp(b.y_min, 0, kBinSize),
            std::clamp(b.x_max, 0, kBinSize), std::clamp(b.y_max, 0, kBinSize)};
  }

  std::vector<int> top_;
  std::vector<long> visible_;
  std::vector<Box> extent_;
};

/// Unoccluded fraction of an object's box.
inline double visibility(const Scene& scene, const Raster& raster, int id) {
  const std::size_t i = scene.index_of(id);
  return static_cast<double>(raster.visible_pixels(i)) / area(scene.objects[i].box);
}

inline double visibility(const Scene& scene, int id) {
  (void)scene.index_of(id);
  return visibility(scene, Raster(scene), id);
}

struct Detection {
  int id{};
  int class_id{};
  Box box;             // visible extent
  double visibility{};
  int depth_rank{};    // stacking rank reported by the simulator

  bool operator==(const Detection&) const = default;
};

struct Observation {
  std::vector<Detection> detections;
  /// kGridCells x kGridCells x kNumClasses, row-major in (row = y, col = x, class).
  std::vector<float> class_grid;
  int timestep{};

  float grid(int row, int col, int cls) const {
    return class_grid[static_cast<std::size_t>((row * kGridCells + col) * kNumClasses + cls)];
  }

  bool operator==(const Observation&) const = default;
};

inline Observation observe(const Scene& scene, int timestep = 0,
                           double threshold = kVisibilityThreshold) {
  const Raster raster(scene);
  Observation obs;
  obs.timestep = timestep;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    const double vis = static_cast<double>(raster.visible_pixels(i)) / area(o.box);
    if (vis >= threshold && raster.visible_pixels(i) > 0)
      obs.detections.push_back({o.id, o.class_id, raster.visible_box(i), vis, o.z});
  }
  std::sort(obs.detections.begin(), obs.detections.end(),
            [](const Detection& a, const Detection& b) { return a.id < b.id; });

  std::vector<int> counts(static_cast<std::size_t>(kGridCells * kGridCells * kNumClasses), 0);
  for (int y = 0; y < kBinSize; ++y) {
    for (int x = 0; x < kBinSize; ++x) {
      const int t = raster.top_index(x, y);
      if (t < 0) continue;
      const int cls = scene.objects[static_cast<std::size_t>(t)].class_id;
      const int cell = (y / kGridCellPixels) * kGridCells + x / kGridCellPixels;
      ++counts[static_cast<std::size_t>(cell * kNumClasses + cls)];
    }
  }
  constexpr float cell_area = kGridCellPixels * kGridCellPixels;
  obs.class_grid.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    obs.class_grid[i] = static_cast<float>(counts[i]) / cell_area;
  return obs;
}

/// Whether pixel (x, y) lies in the swept push corridor (pixel centers, inclusive edges).
inline bool in_corridor(const actions::PushAction& push, int x, int y) {
  const actions::Vec2 d = actions::direction_vector(push.direction_class);
  const double vx = x + 0.5 - push.start.x;
  const double vy = y + 0.5 - push.start.y;
  const double along = vx * d.dx + vy * d.dy;
  const double across = vx * d.dy - vy * d.dx;
  return along >= 0.0 && along <= actions::kPushDistance &&
         std::abs(across) <= kCorridorWidth / 2.0;
}

struct PushResult {
  Scene scene;
  std::set<int> moved;
};

namespace detail {

inline Box translate(Box b, int dx, int dy) {
  return {b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy};
}

inline Box clamp_to_bin(Box b) {
  int dx = 0;
  int dy = 0;
  if (b.x_min < 0) dx = -b.x_min;
  if (b.x_max > kBinSize) dx = kBinSize - b.x_max;
  if (b.y_min < 0) dy = -b.y_min;
  if (b.y_max > kBinSize) dy = kBinSize - b.y_max;
  return translate(b, dx, dy);
}

inline int sign(int v) { return (v > 0) - (v < 0); }

/// Shortest per-axis slide along (sx, sy) that takes `mover` off `obstacle`.
inline int separation(const Box& obstacle, const Box& mover, int sx, int sy) {
  constexpr int none = std::numeric_limits<int>::max();
  const int need_x = sx > 0 ? obstacle.x_max - mover.x_min : sx < 0 ? mover.x_max - obstacle.x_min : none;
  const int need_y = sy > 0 ? obstacle.y_max - mover.y_min : sy < 0 ? mover.y_max - obstacle.y_min : none;
  return std::min(need_x, need_y);
}

}  // namespace detail

/// Quasi-static push: the topmost object under the corridor slides by the push vector and
/// bulldozes lower objects it lands on by the minimal amount along the same direction.
inline PushResult apply_push(const Scene& scene, const actions::PushAction& push) {
  if (!(push.start.x >= 0.0 && push.start.x < kBinSize && push.start.y >= 0.0 &&
        push.start.y < kBinSize))
    throw std::invalid_argument("apply_push: push start outside the bin");
  const actions::Offset off = actions::push_offset(push.direction_class);

  const Raster raster(scene);
  const int reach = actions::kPushDistance + kCorridorWidth;
  const int x0 = std::max(0, static_cast<int>(push.start.x) - reach);
  const int x1 = std::min(kBinSize, static_cast<int>(push.start.x) + reach + 1);
  const int y0 = std::max(0, static_cast<int>(push.start.y) - reach);
  const int y1 = std::min(kBinSize, static_cast<int>(push.start.y) + reach + 1);
  int hit = -1;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const int t = raster.top_index(x, y);
      if (t < 0 || !in_corridor(push, x, y)) continue;
      if (hit < 0 || scene.objects[static_cast<std::size_t>(t)].z >
                         scene.objects[static_cast<std::size_t>(hit)].z)
        hit = t;
    }
  }

  PushResult result{scene, {}};
  if (hit < 0) return result;

  auto& objs = result.scene.objects;
  std::vector<bool> settled(objs.size(), false);
  std::deque<std::size_t> queue;
  const auto h = static_cast<std::size_t>(hit);
  objs[h].box = detail::clamp_to_bin(detail::translate(objs[h].box, off.dx, off.dy));
  settled[h] = true;
  queue.push_back(h);
  const int sx = detail::sign(off.dx);
  const int sy = detail::sign(off.dy);
  while (!queue.empty()) {
    const std::size_t m = queue.front();
    queue.pop_front();
    for (std::size_t j = 0; j < objs.size(); ++j) {
      if (settled[j] || objs[j].z >= objs[m].z || !overlaps(objs[m].box, objs[j].box)) continue;
      const int s = detail::separation(objs[m].box, objs[j].box, sx, sy);
      objs[j].box = detail::clamp_to_bin(detail::translate(objs[j].box, sx * s, sy * s));
      settled[j] = true;
      queue.push_back(j);
    }
  }
  for (std::size_t i = 0; i < objs.size(); ++i)
    if (objs[i].box != scene.objects[i].box) result.moved.insert(objs[i].id);
  return result;
}

}  // namespace mqa::world
