#include "crowdsim/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace crowdsim {

Vec2 closest_point_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len_sq = ab.norm_sq();
  if (len_sq == 0.0) return a;
  double t = (p - a).dot(ab) / len_sq;
  t = std::clamp(t, 0.0, 1.0);
  return a + ab * t;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  return (p - closest_point_on_segment(p, a, b)).norm();
}

std::optional<double> ray_circle(Vec2 origin, Vec2 dir, Vec2 center, double radius) {
  const Vec2 m = origin - center;
  const double c = m.norm_sq() - radius * radius;
  if (c <= 0.0) return 0.0;  // origin inside or on the circle
  const double b = m.dot(dir);
  if (b > 0.0) return std::nullopt;  // circle behind the origin
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double t = -b - std::sqrt(disc);
  return t >= 0.0 ? std::optional<double>(t) : std::nullopt;
}

std::optional<double> ray_segment(Vec2 origin, Vec2 dir, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double denom = dir.x * ab.y - dir.y * ab.x;
  const Vec2 ao = a - origin;
  if (std::abs(denom) < 1e-14) {
    // Parallel. Hits only if collinear; report the nearest point ahead.
    const double cross = ao.x * dir.y - ao.y * dir.x;
    if (std::abs(cross) > 1e-12) return std::nullopt;
    const double ta = ao.dot(dir);
    const double tb = (b - origin).dot(dir);
    const double lo = std::min(ta, tb), hi = std::max(ta, tb);
    if (hi < 0.0) return std::nullopt;
    return std::max(lo, 0.0);
  }
  const double t = (ao.x * ab.y - ao.y * ab.x) / denom;
  const double s = (ao.x * dir.y - ao.y * dir.x) / denom;
  if (t < 0.0 || s < 0.0 || s > 1.0) return std::nullopt;
  return t;
}

std::optional<double> ray_capsule(Vec2 origin, Vec2 dir, Vec2 a, Vec2 b, double r) {
  if (r <= 0.0) return ray_segment(origin, dir, a, b);
  if (point_segment_distance(origin, a, b) <= r) return 0.0;

  std::optional<double> best;
  auto consider = [&best](std::optional<double> t) {
    if (t && (!best || *t < *best)) best = t;
  };
  consider(ray_circle(origin, dir, a, r));
  consider(ray_circle(origin, dir, b, r));
  const Vec2 ab = b - a;
  if (ab.norm_sq() > 0.0) {
    const Vec2 n = Vec2{-ab.y, ab.x}.with_norm(r);
    consider(ray_segment(origin, dir, a + n, b + n));
    consider(ray_segment(origin, dir, a - n, b - n));
  }
  return best;
}

}  // namespace crowdsim
