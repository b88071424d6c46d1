#pragma once

#include <optional>

#include "crowdsim/vec2.hpp"

namespace crowdsim {

// Distance from point p to segment [a, b].
double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

// Closest point on segment [a, b] to p.
Vec2 closest_point_on_segment(Vec2 p, Vec2 a, Vec2 b);

// First nonnegative ray parameter t with |origin + t*dir - center| = radius.
// Returns 0 when the origin is inside the circle; dir must be unit length.
std::optional<double> ray_circle(Vec2 origin, Vec2 dir, Vec2 center, double radius);

// First nonnegative t where the ray crosses segment [a, b] (zero thickness).
std::optional<double> ray_segment(Vec2 origin, Vec2 dir, Vec2 a, Vec2 b);

// First nonnegative t where the ray touches the capsule around [a, b] with
// radius r (a segment dilated by r). r = 0 degenerates to ray_segment.
std::optional<double> ray_capsule(Vec2 origin, Vec2 dir, Vec2 a, Vec2 b, double r);

}  // namespace crowdsim
