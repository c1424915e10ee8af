#pragma once

#include <cstddef>
#include <vector>

namespace goat {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// True when the vertices, in order, turn strictly the same way at every corner.
bool is_strictly_convex(const std::vector<Point2>& polygon);

// Indices of the strict convex hull of `points`, counter-clockwise, starting
// from the lowest-x (then lowest-y) point. Collinear points are excluded.
std::vector<std::size_t> convex_hull(const std::vector<Point2>& points);

}  // namespace goat
