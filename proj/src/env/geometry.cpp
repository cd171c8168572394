#include "skillforge/env/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "skillforge/common/error.hpp"

namespace skillforge::env {

double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 a) { return std::hypot(a.x, a.y); }

double signed_area(const Polygon& poly) {
  double area = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) area += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * area;
}

double perimeter(const Polygon& poly) {
  double len = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) len += norm(poly[(i + 1) % n] - poly[i]);
  return len;
}

bool is_convex(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e0 = poly[(i + 1) % n] - poly[i];
    const Vec2 e1 = poly[(i + 2) % n] - poly[(i + 1) % n];
    if (cross(e0, e1) < -1e-12) return false;
  }
  return true;
}

namespace {

bool segments_cross(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 &&
         d4 != 0;
}

}  // namespace

bool is_simple(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
    }
  }
  return true;
}

Vec2 apply(const Pose& pose, Vec2 local) {
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  return {pose.x + c * local.x - s * local.y, pose.y + s * local.x + c * local.y};
}

Polygon apply(const Pose& pose, const Polygon& local) {
  Polygon out;
  out.reserve(local.size());
  for (const auto& v : local) out.push_back(apply(pose, v));
  return out;
}

double project_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  if (len2 == 0.0) return 0.0;
  return std::clamp(((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2, 0.0, 1.0);
}

double distance_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const double t = project_to_segment(p, a, b);
  return norm(p - (a + t * (b - a)));
}

double distance_to_boundary(Vec2 p, const Polygon& poly) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    best = std::min(best, distance_to_segment(p, poly[i], poly[(i + 1) % n]));
  }
  return best;
}

bool contains(const Polygon& poly, Vec2 p) {
  bool inside = false;
  for (std::size_t i = 0, n = poly.size(), j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

double penetration(const Polygon& poly, Vec2 p) {
  return contains(poly, p) ? distance_to_boundary(p, poly) : 0.0;
}

Vec2 point_at_arc_length(const Polygon& poly, double s) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % n];
    const double len = norm(b - a);
    if (s <= len || i + 1 == n) {
      const double t = len > 0.0 ? std::clamp(s / len, 0.0, 1.0) : 0.0;
      return a + t * (b - a);
    }
    s -= len;
  }
  return poly.front();
}

std::vector<Vec2> perimeter_samples(const Polygon& poly, std::size_t count) {
  if (poly.size() < 3) throw InvalidArgument("perimeter_samples: degenerate polygon");
  if (count < poly.size()) throw InvalidArgument("perimeter_samples: fewer samples than vertices");
  std::vector<Vec2> out(poly.begin(), poly.end());
  const std::size_t extra = count - poly.size();
  const double total = perimeter(poly);
  for (std::size_t k = 0; k < extra; ++k) {
    // Midpoints of `extra` equal arc-length cells.
    out.push_back(point_at_arc_length(poly, total * (static_cast<double>(k) + 0.5) /
                                                static_cast<double>(extra)));
  }
  return out;
}

}  // namespace skillforge::env
