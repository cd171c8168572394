#pragma once

#include <cstddef>
#include <vector>

namespace skillforge::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

/// Planar rigid pose: translation plus rotation about the plug frame origin.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  friend bool operator==(const Pose&, const Pose&) = default;
};

using Polygon = std::vector<Vec2>;

double cross(Vec2 a, Vec2 b);
double norm(Vec2 a);

double signed_area(const Polygon& poly);
double perimeter(const Polygon& poly);
bool is_convex(const Polygon& poly);
/// No two non-adjacent edges intersect.
bool is_simple(const Polygon& poly);

Vec2 apply(const Pose& pose, Vec2 local);
Polygon apply(const Pose& pose, const Polygon& local);

double distance_to_segment(Vec2 p, Vec2 a, Vec2 b);
/// Closest point on the segment [a, b] as a fraction along it.
double project_to_segment(Vec2 p, Vec2 a, Vec2 b);
double distance_to_boundary(Vec2 p, const Polygon& poly);
/// Crossing-number test. Points on the boundary are classified arbitrarily,
/// which is harmless because their penetration depth is zero.
bool contains(const Polygon& poly, Vec2 p);
/// Distance to the boundary if p is inside, else 0.
double penetration(const Polygon& poly, Vec2 p);

/// The polygon's vertices followed by points spread along the edges in
/// proportion to edge length, `count` points in total.
std::vector<Vec2> perimeter_samples(const Polygon& poly, std::size_t count);

/// Point at arc-length parameter s in [0, perimeter) walking from vertex 0.
Vec2 point_at_arc_length(const Polygon& poly, double s);

}  // namespace skillforge::env
